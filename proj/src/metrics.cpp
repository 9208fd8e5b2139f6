#include "prefflow/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "prefflow/flow.hpp"

namespace prefflow {

void RewardSpec::validate() const {
    if (w_fidelity < 0.0 || w_sharpness < 0.0)
        throw ContractError("reward weights must be >= 0");
    if (w_fidelity == 0.0 && w_sharpness == 0.0)
        throw ContractError("at least one reward weight must be positive");
    if (tau <= 0.0) throw ContractError("reward tau must be > 0");
}

double reward_fidelity(const Tensor& x_hat, const Tensor& x_gt, double tau) {
    if (x_hat.size() != x_gt.size()) throw ContractError("reward_fidelity: shape mismatch");
    if (tau <= 0.0) throw ContractError("reward_fidelity: tau must be > 0");
    double mse = 0.0;
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
        const double d = x_hat[i] - x_gt[i];
        mse += d * d;
    }
    mse /= static_cast<double>(x_hat.size());
    return std::exp(-mse / tau);
}

double reward_sharpness(const Tensor& x_hat, std::size_t height, std::size_t width) {
    if (x_hat.size() != height * width) throw ContractError("reward_sharpness: shape mismatch");
    double acc = 0.0;
    std::size_t count = 0;
    auto px = [&](std::size_t r, std::size_t c) { return x_hat[r * width + c]; };
    for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) {
            double gx = 0.0, gy = 0.0;
            if (c + 1 < width) gx = px(r, c + 1) - px(r, c);
            if (r + 1 < height) gy = px(r + 1, c) - px(r, c);
            acc += gx * gx + gy * gy;
            ++count;
        }
    const double s = acc / static_cast<double>(count);
    return s / (1.0 + s);
}

RewardBreakdown composite_reward(const Tensor& x_hat, const Tensor& x_gt,
                                 std::size_t height, std::size_t width, const RewardSpec& spec) {
    spec.validate();
    RewardBreakdown b;
    b.fidelity = reward_fidelity(x_hat, x_gt, spec.tau);
    b.sharpness = reward_sharpness(x_hat, height, width);
    b.total = spec.w_fidelity * b.fidelity + spec.w_sharpness * b.sharpness;
    return b;
}

FeatureMap FeatureMap::create(std::size_t in_dim, std::size_t feat_dim, std::uint64_t seed) {
    FeatureMap fm;
    fm.in_dim = in_dim;
    fm.feat_dim = feat_dim;
    fm.projection = Tensor({feat_dim, in_dim});
    Rng rng(seed);
    const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : fm.projection.vec()) v = scale * rng.normal();
    return fm;
}

Tensor FeatureMap::project(const Tensor& x) const {
    if (x.size() != in_dim) throw ContractError("FeatureMap: input size mismatch");
    Tensor out({feat_dim});
    for (std::size_t r = 0; r < feat_dim; ++r) {
        double acc = 0.0;
        const double* row = projection.data() + r * in_dim;
        for (std::size_t c = 0; c < in_dim; ++c) acc += row[c] * (x[c] - center);
        out[r] = acc;
    }
    return out;
}

double feature_similarity(const Image& x_hat, const Image& x_ref, const FeatureMap& fm) {
    const Tensor fa = fm.project(x_hat.pixels);
    const Tensor fb = fm.project(x_ref.pixels);
    const double na = fa.norm2(), nb = fb.norm2();
    if (na == 0.0 || nb == 0.0) throw NumericError("feature_similarity: zero-norm feature");
    double dot = 0.0;
    for (std::size_t i = 0; i < fa.size(); ++i) dot += fa[i] * fb[i];
    return dot / (na * nb);
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
    if (t.ndim() != 2) throw ContractError("expected 2-D tensor");
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (std::size_t r = 0; r < t.dim(0); ++r)
        for (std::size_t c = 0; c < t.dim(1); ++c) m(static_cast<long>(r), static_cast<long>(c)) = t.at(r, c);
    return m;
}

// symmetric PSD square root via eigendecomposition with a small ridge
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition failed");
    Eigen::VectorXd vals = es.eigenvalues();
    for (long i = 0; i < vals.size(); ++i) {
        if (vals[i] < -1e-8) throw NumericError("matrix not PSD after ridge");
        vals[i] = std::sqrt(std::max(vals[i], 0.0));
    }
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

void moments(const std::vector<Tensor>& feats, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
    const std::size_t n = feats.size();
    const std::size_t d = feats[0].size();
    mu = Eigen::VectorXd::Zero(static_cast<long>(d));
    for (const auto& f : feats) {
        if (f.size() != d) throw ContractError("frechet_distance: inconsistent feature dims");
        for (std::size_t i = 0; i < d; ++i) mu[static_cast<long>(i)] += f[i];
    }
    mu /= static_cast<double>(n);
    cov = Eigen::MatrixXd::Zero(static_cast<long>(d), static_cast<long>(d));
    for (const auto& f : feats) {
        Eigen::VectorXd x(static_cast<long>(d));
        for (std::size_t i = 0; i < d; ++i) x[static_cast<long>(i)] = f[i];
        const Eigen::VectorXd c = x - mu;
        cov += c * c.transpose();
    }
    cov /= static_cast<double>(n);
}

double frechet_impl(const Eigen::VectorXd& mu_a, Eigen::MatrixXd cov_a,
                    const Eigen::VectorXd& mu_b, Eigen::MatrixXd cov_b) {
    const double ridge = 1e-10;
    const long d = mu_a.size();
    cov_a += ridge * Eigen::MatrixXd::Identity(d, d);
    cov_b += ridge * Eigen::MatrixXd::Identity(d, d);
    const Eigen::MatrixXd sqrt_a = psd_sqrt(cov_a);
    const Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
    const Eigen::MatrixXd cross = psd_sqrt(0.5 * (inner + inner.transpose()));
    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double trace_term = cov_a.trace() + cov_b.trace() - 2.0 * cross.trace();
    return mean_term + trace_term;
}

}  // namespace

double frechet_distance(const std::vector<Tensor>& feats_a, const std::vector<Tensor>& feats_b) {
    if (feats_a.empty() || feats_b.empty()) throw ContractError("frechet_distance: empty set");
    const std::size_t d = feats_a[0].size();
    if (feats_a.size() < d + 1 || feats_b.size() < d + 1)
        throw ContractError("frechet_distance: need at least d+1 samples per set");
    Eigen::VectorXd mu_a, mu_b;
    Eigen::MatrixXd cov_a, cov_b;
    moments(feats_a, mu_a, cov_a);
    moments(feats_b, mu_b, cov_b);
    return frechet_impl(mu_a, cov_a, mu_b, cov_b);
}

double frechet_from_moments(const Tensor& mu_a, const Tensor& cov_a,
                            const Tensor& mu_b, const Tensor& cov_b) {
    const long d = static_cast<long>(mu_a.size());
    Eigen::VectorXd ma(d), mb(d);
    for (long i = 0; i < d; ++i) {
        ma[i] = mu_a[static_cast<std::size_t>(i)];
        mb[i] = mu_b[static_cast<std::size_t>(i)];
    }
    return frechet_impl(ma, to_eigen(cov_a), mb, to_eigen(cov_b));
}

VarianceReport variance_analysis(const Mlp& policy, const Condition& cond, const Tensor& x_gt,
                                 std::size_t height, std::size_t width, const RewardSpec& spec,
                                 int sampler_steps, int n_runs, std::uint64_t base_seed) {
    if (n_runs < 2) throw ContractError("variance_analysis: N must be >= 2");
    std::vector<double> fid, sharp, sum;
    for (int i = 0; i < n_runs; ++i) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(i));
        const Tensor sample = euler_sample(policy, cond, sampler_steps, seed, x_gt.size());
        const RewardBreakdown b = composite_reward(sample, x_gt, height, width, spec);
        fid.push_back(b.fidelity);
        sharp.push_back(b.sharpness);
        sum.push_back(b.total);
    }
    auto pop_std = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        return std::sqrt(var / static_cast<double>(xs.size()));
    };
    return {pop_std(fid), pop_std(sharp), pop_std(sum)};
}

}  // namespace prefflow
