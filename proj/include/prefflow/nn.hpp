#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefflow/autodiff.hpp"
#include "prefflow/rng.hpp"
#include "prefflow/tensor.hpp"

namespace prefflow {

// Feed-forward network: tanh on hidden layers, linear output.
struct Mlp {
    std::vector<std::size_t> widths;  // input, hidden..., output
    std::vector<Tensor> weights;      // (widths[i+1], widths[i])
    std::vector<Tensor> biases;       // (widths[i+1])

    static Mlp create(const std::vector<std::size_t>& widths, Rng& rng);
    static Mlp zeros(const std::vector<std::size_t>& widths);

    Tensor eval(const Tensor& input) const;

    std::size_t in_dim() const { return widths.front(); }
    std::size_t out_dim() const { return widths.back(); }
};

// Graph view of an Mlp: weight/bias Vars sharing the parameter values.
struct MlpVars {
    std::vector<ad::VarPtr> weights;
    std::vector<ad::VarPtr> biases;
};

MlpVars lift(const Mlp& net, bool trainable);
ad::VarPtr mlp_forward(const MlpVars& vars, const ad::VarPtr& input);

// Named views over a model's parameter tensors, for optimizers and checkpoints.
struct ParamRefs {
    std::vector<std::string> names;
    std::vector<Tensor*> tensors;

    void add(const std::string& name, Tensor* t) {
        names.push_back(name);
        tensors.push_back(t);
    }
    void add_mlp(const std::string& prefix, Mlp& net);
    std::size_t count() const { return tensors.size(); }
};

// Collects gradients out of lifted Vars in the same order as a ParamRefs.
struct GradRefs {
    std::vector<ad::VarPtr> vars;

    void add(const ad::VarPtr& v) { vars.push_back(v); }
    void add_mlp(const MlpVars& m) {
        for (std::size_t i = 0; i < m.weights.size(); ++i) {
            vars.push_back(m.weights[i]);
            vars.push_back(m.biases[i]);
        }
    }
    std::vector<Tensor> grads() const;
};

// AdamW with decoupled weight decay and bias-corrected moments.
struct AdamW {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    std::vector<Tensor> m;  // first moments, one per parameter tensor
    std::vector<Tensor> v;  // second moments
    std::uint64_t step_count = 0;

    void init(const ParamRefs& params);
    void step(const ParamRefs& params, const std::vector<Tensor>& grads);
};

std::vector<NamedTensor> snapshot(const ParamRefs& params);
void restore(const ParamRefs& params, const std::vector<NamedTensor>& entries);

}  // namespace prefflow
