#include "prefflow/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace prefflow {

Mlp Mlp::create(const std::vector<std::size_t>& widths, Rng& rng) {
    if (widths.size() < 2) throw ContractError("Mlp needs at least input and output widths");
    Mlp net;
    net.widths = widths;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        const std::size_t fan_in = widths[i];
        const std::size_t fan_out = widths[i + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w({fan_out, fan_in});
        for (double& x : w.vec()) x = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Tensor::zeros({fan_out}));
    }
    return net;
}

Mlp Mlp::zeros(const std::vector<std::size_t>& widths) {
    if (widths.size() < 2) throw ContractError("Mlp needs at least input and output widths");
    Mlp net;
    net.widths = widths;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        net.weights.push_back(Tensor::zeros({widths[i + 1], widths[i]}));
        net.biases.push_back(Tensor::zeros({widths[i + 1]}));
    }
    return net;
}

Tensor Mlp::eval(const Tensor& input) const {
    if (input.size() != widths.front()) throw ContractError("Mlp::eval input size mismatch");
    Tensor cur = input;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const std::size_t m = widths[l + 1];
        const std::size_t n = widths[l];
        Tensor next({m});
        const double* w = weights[l].data();
        for (std::size_t r = 0; r < m; ++r) {
            double acc = biases[l][r];
            const double* wr = w + r * n;
            for (std::size_t c = 0; c < n; ++c) acc += wr[c] * cur[c];
            next[r] = acc;
        }
        if (l + 1 < weights.size())
            for (double& x : next.vec()) x = std::tanh(x);
        cur = std::move(next);
    }
    return cur;
}

MlpVars lift(const Mlp& net, bool trainable) {
    MlpVars vars;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        vars.weights.push_back(trainable ? ad::leaf(net.weights[l]) : ad::constant(net.weights[l]));
        vars.biases.push_back(trainable ? ad::leaf(net.biases[l]) : ad::constant(net.biases[l]));
    }
    return vars;
}

ad::VarPtr mlp_forward(const MlpVars& vars, const ad::VarPtr& input) {
    ad::VarPtr cur = input;
    for (std::size_t l = 0; l < vars.weights.size(); ++l) {
        cur = ad::affine(vars.weights[l], vars.biases[l], cur);
        if (l + 1 < vars.weights.size()) cur = ad::tanh_op(cur);
    }
    return cur;
}

void ParamRefs::add_mlp(const std::string& prefix, Mlp& net) {
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        add(prefix + ".w" + std::to_string(l), &net.weights[l]);
        add(prefix + ".b" + std::to_string(l), &net.biases[l]);
    }
}

std::vector<Tensor> GradRefs::grads() const {
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (const auto& v : vars) {
        if (v->has_grad)
            out.push_back(v->grad);
        else
            out.push_back(Tensor::zeros(v->value.shape()));
    }
    return out;
}

void AdamW::init(const ParamRefs& params) {
    m.clear();
    v.clear();
    step_count = 0;
    for (Tensor* t : params.tensors) {
        m.push_back(Tensor::zeros(t->shape()));
        v.push_back(Tensor::zeros(t->shape()));
    }
}

void AdamW::step(const ParamRefs& params, const std::vector<Tensor>& grads) {
    if (m.size() != params.tensors.size()) throw ContractError("AdamW state not initialized");
    if (grads.size() != params.tensors.size()) throw ContractError("AdamW gradient count mismatch");
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t p = 0; p < params.tensors.size(); ++p) {
        Tensor& theta = *params.tensors[p];
        const Tensor& g = grads[p];
        if (!theta.same_shape(g)) throw ContractError("AdamW shape mismatch for " + params.names[p]);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * g[i];
            v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[p][i] / bc1;
            const double vhat = v[p][i] / bc2;
            theta[i] -= lr * weight_decay * theta[i];
            theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

std::vector<NamedTensor> snapshot(const ParamRefs& params) {
    std::vector<NamedTensor> out;
    out.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i)
        out.push_back({params.names[i], *params.tensors[i]});
    return out;
}

void restore(const ParamRefs& params, const std::vector<NamedTensor>& entries) {
    if (entries.size() != params.count()) throw ContractError("checkpoint entry count mismatch");
    for (std::size_t i = 0; i < params.count(); ++i) {
        if (entries[i].name != params.names[i])
            throw ContractError("checkpoint entry name mismatch: expected " + params.names[i] +
                                ", got " + entries[i].name);
        if (!entries[i].tensor.same_shape(*params.tensors[i]))
            throw ContractError("checkpoint shape mismatch for " + params.names[i]);
        *params.tensors[i] = entries[i].tensor;
    }
}

}  // namespace prefflow
