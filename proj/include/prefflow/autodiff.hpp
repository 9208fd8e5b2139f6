#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "prefflow/tensor.hpp"

namespace prefflow::ad {

// Reverse-mode tape node. The primitive set is fixed: affine maps,
// pointwise tanh, concatenation, embedding pooling, squared error,
// softmax cross-entropy, and linear/convex combinations of scalars.
struct Var;
using VarPtr = std::shared_ptr<Var>;

struct Var {
    Tensor value;
    Tensor grad;  // allocated on first use during backward
    bool trainable = false;
    std::vector<VarPtr> parents;
    std::function<void(Var&)> backprop;  // scatters this->grad into parents

    bool has_grad = false;
    void ensure_grad() {
        if (!has_grad) {
            grad = Tensor::zeros(value.shape());
            has_grad = true;
        }
    }
};

VarPtr constant(Tensor value);
VarPtr leaf(Tensor value, bool trainable = true);

VarPtr add(const VarPtr& a, const VarPtr& b);
VarPtr sub(const VarPtr& a, const VarPtr& b);
VarPtr scale(const VarPtr& a, double s);
// ca*a + cb*b
VarPtr lincomb(const VarPtr& a, const VarPtr& b, double ca, double cb);
VarPtr add_n(const std::vector<VarPtr>& terms);

// y = W x + b, with W of shape (m, n), x of shape (n), b of shape (m)
VarPtr affine(const VarPtr& W, const VarPtr& b, const VarPtr& x);
VarPtr tanh_op(const VarPtr& a);
VarPtr concat(const std::vector<VarPtr>& parts);

// mean of the rows of `table` (shape (V, E)) selected by `ids`
VarPtr embed_mean(const VarPtr& table, const std::vector<int>& ids);

// scalar ||a||^2
VarPtr sum_sq(const VarPtr& a);
// scalar ||a - b||^2
VarPtr sq_err(const VarPtr& a, const VarPtr& b);
// scalar mean squared error: ||a - b||^2 / numel
VarPtr mse(const VarPtr& a, const VarPtr& b);
// scalar -log softmax(logits)[target]
VarPtr softmax_ce(const VarPtr& logits, int target);

// Seeds d(loss)/d(loss) = 1 and propagates through the tape.
void backward(const VarPtr& loss);

}  // namespace prefflow::ad
