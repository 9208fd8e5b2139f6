#include "prefflow/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace prefflow::ad {

namespace {

VarPtr make_node(Tensor value, std::vector<VarPtr> parents,
                 std::function<void(Var&)> backprop) {
    auto v = std::make_shared<Var>();
    v->value = std::move(value);
    v->parents = std::move(parents);
    v->backprop = std::move(backprop);
    return v;
}

}  // namespace

VarPtr constant(Tensor value) {
    auto v = std::make_shared<Var>();
    v->value = std::move(value);
    return v;
}

VarPtr leaf(Tensor value, bool trainable) {
    auto v = std::make_shared<Var>();
    v->value = std::move(value);
    v->trainable = trainable;
    return v;
}

VarPtr add(const VarPtr& a, const VarPtr& b) { return lincomb(a, b, 1.0, 1.0); }
VarPtr sub(const VarPtr& a, const VarPtr& b) { return lincomb(a, b, 1.0, -1.0); }

VarPtr scale(const VarPtr& a, double s) {
    Tensor out = a->value;
    out *= s;
    return make_node(std::move(out), {a}, [s](Var& self) {
        Var& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += s * self.grad[i];
    });
}

VarPtr lincomb(const VarPtr& a, const VarPtr& b, double ca, double cb) {
    if (!a->value.same_shape(b->value)) throw ContractError("lincomb shape mismatch");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = ca * a->value[i] + cb * b->value[i];
    return make_node(std::move(out), {a, b}, [ca, cb](Var& self) {
        Var& pa = *self.parents[0];
        Var& pb = *self.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            pa.grad[i] += ca * self.grad[i];
            pb.grad[i] += cb * self.grad[i];
        }
    });
}

VarPtr add_n(const std::vector<VarPtr>& terms) {
    if (terms.empty()) throw ContractError("add_n of empty list");
    Tensor out = terms[0]->value;
    for (std::size_t k = 1; k < terms.size(); ++k) {
        if (!terms[k]->value.same_shape(out)) throw ContractError("add_n shape mismatch");
        out += terms[k]->value;
    }
    return make_node(std::move(out), terms, [](Var& self) {
        for (auto& p : self.parents) {
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        }
    });
}

VarPtr affine(const VarPtr& W, const VarPtr& b, const VarPtr& x) {
    if (W->value.ndim() != 2) throw ContractError("affine: W must be 2-D");
    const std::size_t m = W->value.dim(0);
    const std::size_t n = W->value.dim(1);
    if (x->value.size() != n || b->value.size() != m)
        throw ContractError("affine: shape mismatch");
    Tensor out({m});
    const double* w = W->value.data();
    const double* xv = x->value.data();
    for (std::size_t r = 0; r < m; ++r) {
        double acc = b->value[r];
        const double* wr = w + r * n;
        for (std::size_t c = 0; c < n; ++c) acc += wr[c] * xv[c];
        out[r] = acc;
    }
    return make_node(std::move(out), {W, b, x}, [m, n](Var& self) {
        Var& pw = *self.parents[0];
        Var& pb = *self.parents[1];
        Var& px = *self.parents[2];
        pw.ensure_grad();
        pb.ensure_grad();
        px.ensure_grad();
        const double* w = pw.value.data();
        const double* xv = px.value.data();
        for (std::size_t r = 0; r < m; ++r) {
            const double g = self.grad[r];
            if (g == 0.0) continue;
            pb.grad[r] += g;
            double* dwr = pw.grad.data() + r * n;
            const double* wr = w + r * n;
            for (std::size_t c = 0; c < n; ++c) {
                dwr[c] += g * xv[c];
                px.grad[c] += g * wr[c];
            }
        }
    });
}

VarPtr tanh_op(const VarPtr& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->value[i]);
    return make_node(std::move(out), {a}, [](Var& self) {
        Var& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.value[i];
            pa.grad[i] += self.grad[i] * (1.0 - y * y);
        }
    });
}

VarPtr concat(const std::vector<VarPtr>& parts) {
    if (parts.empty()) throw ContractError("concat of empty list");
    std::size_t total = 0;
    for (const auto& p : parts) total += p->value.size();
    Tensor out({total});
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::copy(p->value.vec().begin(), p->value.vec().end(), out.vec().begin() + off);
        off += p->value.size();
    }
    return make_node(std::move(out), parts, [](Var& self) {
        std::size_t off = 0;
        for (auto& p : self.parents) {
            p->ensure_grad();
            for (std::size_t i = 0; i < p->value.size(); ++i) p->grad[i] += self.grad[off + i];
            off += p->value.size();
        }
    });
}

VarPtr embed_mean(const VarPtr& table, const std::vector<int>& ids) {
    if (table->value.ndim() != 2) throw ContractError("embed_mean: table must be 2-D");
    if (ids.empty()) throw ContractError("embed_mean: empty id list");
    const std::size_t V = table->value.dim(0);
    const std::size_t E = table->value.dim(1);
    Tensor out({E});
    for (int id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= V)
            throw ContractError("embed_mean: id out of vocabulary");
        for (std::size_t j = 0; j < E; ++j) out[j] += table->value.at(id, j);
    }
    const double inv = 1.0 / static_cast<double>(ids.size());
    out *= inv;
    return make_node(std::move(out), {table}, [ids, E, inv](Var& self) {
        Var& pt = *self.parents[0];
        pt.ensure_grad();
        for (int id : ids)
            for (std::size_t j = 0; j < E; ++j)
                pt.grad.at(id, j) += inv * self.grad[j];
    });
}

VarPtr sum_sq(const VarPtr& a) {
    double s = 0.0;
    for (double v : a->value.vec()) s += v * v;
    return make_node(Tensor({1}, {s}), {a}, [](Var& self) {
        Var& pa = *self.parents[0];
        pa.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < pa.value.size(); ++i)
            pa.grad[i] += 2.0 * g * pa.value[i];
    });
}

VarPtr sq_err(const VarPtr& a, const VarPtr& b) { return sum_sq(sub(a, b)); }

VarPtr mse(const VarPtr& a, const VarPtr& b) {
    return scale(sq_err(a, b), 1.0 / static_cast<double>(a->value.size()));
}

VarPtr softmax_ce(const VarPtr& logits, int target) {
    const std::size_t n = logits->value.size();
    if (target < 0 || static_cast<std::size_t>(target) >= n)
        throw ContractError("softmax_ce: target out of range");
    double mx = logits->value[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, logits->value[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) z += std::exp(logits->value[i] - mx);
    const double loss = std::log(z) - (logits->value[target] - mx);
    return make_node(Tensor({1}, {loss}), {logits}, [target, mx, z](Var& self) {
        Var& pl = *self.parents[0];
        pl.ensure_grad();
        const double g = self.grad[0];
        for (std::size_t i = 0; i < pl.value.size(); ++i) {
            const double p = std::exp(pl.value[i] - mx) / z;
            pl.grad[i] += g * (p - (static_cast<int>(i) == target ? 1.0 : 0.0));
        }
    });
}

void backward(const VarPtr& loss) {
    if (loss->value.size() != 1) throw ContractError("backward: loss must be scalar");
    // iterative post-order topological sort
    std::vector<Var*> order;
    std::unordered_set<Var*> visited;
    std::vector<std::pair<Var*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Var* parent = node->parents[idx].get();
            ++idx;
            if (visited.insert(parent).second) stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Var* node = *it;
        if (node->backprop && node->has_grad) node->backprop(*node);
    }
}

}  // namespace prefflow::ad
