#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prefflow/flow.hpp"
#include "prefflow/metrics.hpp"
#include "prefflow/models.hpp"

namespace prefflow {

// One condition, K sampled restorations, raw and normalized rewards.
struct RolloutGroup {
    Condition cond;
    std::vector<Tensor> samples;
    std::vector<double> raw_rewards;
    std::vector<double> normalized;
    std::vector<std::uint64_t> seeds;
};

enum class ZMode { GroupStd, FixedConstant };

struct NftConfig {
    double gamma = 0.5;  // in (0,1]
    int k = 8;           // rollouts per group, >= 2
    int sampler_steps = 16;
    ZMode z_mode = ZMode::GroupStd;
    double z_const = 1.0;
    double lr = 1e-3;
    int rounds = 200;
    int refresh_interval = 1;  // old-policy refresh, in rounds
    int groups_per_round = 16;
    double weight_decay = 0.0;
    // false: rollout noise seeds are shared across rounds (common random
    // numbers); true: fresh seeds every round
    bool reseed_each_round = false;
    std::uint64_t seed = 0;

    void validate() const;
};

using RewardFn = std::function<double(const Tensor& sample)>;

// r = 0.5 + 0.5*clip((raw - mean)/Z, -1, 1); Z = max(population std, 1e-8)
// under group-std mode.
std::vector<double> normalize_rewards(const std::vector<double>& raw, ZMode mode,
                                      double z_const = 1.0);

// v+ = (1-gamma) v_old + gamma v_theta; v- = (1+gamma) v_old - gamma v_theta
void implicit_proxies(const Tensor& v_old, const Tensor& v_theta, double gamma,
                      Tensor& v_plus, Tensor& v_minus);

struct DeltaReport {
    Tensor d_plus;   // v+ - v_old
    Tensor d_minus;  // v_old - v-
    double residual = 0.0;
};
DeltaReport delta_diagnostic(const Tensor& v_old, const Tensor& v_theta, double gamma);

RolloutGroup rollout_group(const Mlp& old_policy, const Condition& cond, const NftConfig& cfg,
                           std::uint64_t base_seed, std::size_t data_dim,
                           const RewardFn& reward);

ad::VarPtr nft_loss_graph(const MlpVars& gen_vars, const Mlp& old_policy,
                          const RolloutGroup& group, double gamma, Rng& rng);
double nft_loss(const Mlp& net, const Mlp& old_policy, const RolloutGroup& group, double gamma,
                Rng& rng);

struct NftRow {
    int round;
    double mean_raw_reward;
    double reward_fidelity;
    double reward_sharpness;
    double reward_total;
    double nft_loss;
};

struct NftResult {
    std::vector<NftRow> log;
    std::vector<std::size_t> condition_indices;  // corpus indices used for rollouts
};

NftResult nft_train(Models& models, const Corpus& corpus, const RewardSpec& reward_spec,
                    const NftConfig& cfg);

void write_nft_csv(const std::string& path, const std::vector<NftRow>& log);

}  // namespace prefflow
