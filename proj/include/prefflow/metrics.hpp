#pragma once

#include <cstdint>
#include <vector>

#include "prefflow/image.hpp"
#include "prefflow/nn.hpp"
#include "prefflow/tensor.hpp"

namespace prefflow {

struct RewardSpec {
    double w_fidelity = 1.0;
    double w_sharpness = 1.0;
    double tau = 0.1;  // fidelity temperature

    void validate() const;
};

struct RewardBreakdown {
    double fidelity = 0.0;
    double sharpness = 0.0;
    double total = 0.0;
};

// exp(-mse/tau), in (0,1]
double reward_fidelity(const Tensor& x_hat, const Tensor& x_gt, double tau);
// s/(1+s) with s the mean squared finite-difference gradient magnitude, in [0,1)
double reward_sharpness(const Tensor& x_hat, std::size_t height, std::size_t width);
RewardBreakdown composite_reward(const Tensor& x_hat, const Tensor& x_gt,
                                 std::size_t height, std::size_t width, const RewardSpec& spec);

// Frozen seeded random projection from image space to a d-dim feature space.
struct FeatureMap {
    std::size_t in_dim = 0;
    std::size_t feat_dim = 8;
    Tensor projection;  // (feat_dim, in_dim)
    double center = 0.5;

    static FeatureMap create(std::size_t in_dim, std::size_t feat_dim, std::uint64_t seed);
    Tensor project(const Tensor& x) const;
};

double feature_similarity(const Image& x_hat, const Image& x_ref, const FeatureMap& fm);

// Frechet distance between Gaussians fitted to two feature sets.
double frechet_distance(const std::vector<Tensor>& feats_a, const std::vector<Tensor>& feats_b);
double frechet_from_moments(const Tensor& mu_a, const Tensor& cov_a,
                            const Tensor& mu_b, const Tensor& cov_b);

// Multi-seed determinism analysis: N restoration runs for one condition,
// population std of each reward component and their sum.
struct VarianceReport {
    double std_fidelity = 0.0;
    double std_sharpness = 0.0;
    double std_sum = 0.0;
};

struct Condition;  // defined in anchor.hpp

VarianceReport variance_analysis(const Mlp& policy, const Condition& cond, const Tensor& x_gt,
                                 std::size_t height, std::size_t width, const RewardSpec& spec,
                                 int sampler_steps, int n_runs, std::uint64_t base_seed);

}  // namespace prefflow
