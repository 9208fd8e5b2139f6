#include "prefflow/nft.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace prefflow {

void NftConfig::validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must be in (0,1]");
    if (k < 2) throw ContractError("nft: K must be >= 2");
    if (sampler_steps < 1) throw ContractError("nft: sampler steps must be >= 1");
    if (z_mode == ZMode::FixedConstant && z_const <= 0.0)
        throw ContractError("nft: fixed Z constant must be > 0");
    if (lr < 0.0) throw ContractError("nft: learning rate must be >= 0");
    if (rounds < 0) throw ContractError("nft: rounds must be >= 0");
    if (refresh_interval < 1) throw ContractError("nft: refresh interval must be >= 1");
    if (groups_per_round < 1) throw ContractError("nft: groups per round must be >= 1");
}

std::vector<double> normalize_rewards(const std::vector<double>& raw, ZMode mode, double z_const) {
    if (raw.size() < 2) throw ContractError("normalize_rewards: group size must be >= 2");
    // a degenerate group maps to exactly 0.5, without floating-point residue
    // from the mean subtraction
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (*lo == *hi) return std::vector<double>(raw.size(), 0.5);
    const double n = static_cast<double>(raw.size());
    double mean = 0.0;
    for (double r : raw) mean += r;
    mean /= n;
    double var = 0.0;
    for (double r : raw) var += (r - mean) * (r - mean);
    var /= n;  // population variance
    double z;
    if (mode == ZMode::GroupStd) {
        z = std::max(std::sqrt(var), 1e-8);
    } else {
        if (z_const <= 0.0) throw ContractError("normalize_rewards: Z constant must be > 0");
        z = z_const;
    }
    std::vector<double> out;
    out.reserve(raw.size());
    for (double r : raw)
        out.push_back(0.5 + 0.5 * std::clamp((r - mean) / z, -1.0, 1.0));
    return out;
}

void implicit_proxies(const Tensor& v_old, const Tensor& v_theta, double gamma,
                      Tensor& v_plus, Tensor& v_minus) {
    if (!v_old.same_shape(v_theta)) throw ContractError("implicit_proxies: shape mismatch");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must be in (0,1]");
    v_plus = Tensor(v_old.shape());
    v_minus = Tensor(v_old.shape());
    for (std::size_t i = 0; i < v_old.size(); ++i) {
        v_plus[i] = (1.0 - gamma) * v_old[i] + gamma * v_theta[i];
        v_minus[i] = (1.0 + gamma) * v_old[i] - gamma * v_theta[i];
    }
}

DeltaReport delta_diagnostic(const Tensor& v_old, const Tensor& v_theta, double gamma) {
    Tensor v_plus, v_minus;
    implicit_proxies(v_old, v_theta, gamma, v_plus, v_minus);
    DeltaReport rep;
    rep.d_plus = v_plus - v_old;
    rep.d_minus = v_old - v_minus;
    rep.residual = (rep.d_plus - rep.d_minus).norm2();
    return rep;
}

RolloutGroup rollout_group(const Mlp& old_policy, const Condition& cond, const NftConfig& cfg,
                           std::uint64_t base_seed, std::size_t data_dim,
                           const RewardFn& reward) {
    cfg.validate();
    RolloutGroup group;
    group.cond = cond;
    group.samples.reserve(static_cast<std::size_t>(cfg.k));
    for (int k = 0; k < cfg.k; ++k) {
        const std::uint64_t seed = derive_seed(base_seed, static_cast<std::uint64_t>(k));
        group.seeds.push_back(seed);
        Tensor sample;
        try {
            sample = euler_sample(old_policy, cond, cfg.sampler_steps, seed, data_dim);
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (rollout k=" + std::to_string(k) + ")");
        }
        group.raw_rewards.push_back(reward(sample));
        group.samples.push_back(std::move(sample));
    }
    group.normalized = normalize_rewards(group.raw_rewards, cfg.z_mode, cfg.z_const);
    return group;
}

ad::VarPtr nft_loss_graph(const MlpVars& gen_vars, const Mlp& old_policy,
                          const RolloutGroup& group, double gamma, Rng& rng) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ContractError("gamma must be in (0,1]");
    if (group.normalized.size() != group.samples.size())
        throw ContractError("nft_loss: group rewards not normalized");
    const Tensor cvec = group.cond.vec();
    auto cond = ad::constant(cvec);
    std::vector<ad::VarPtr> terms;
    for (std::size_t k = 0; k < group.samples.size(); ++k) {
        const double t = rng.uniform();
        const FlowPath path = fm_pair(group.samples[k], t, rng);
        const Tensor v_old = velocity_eval(old_policy, path.x_t, t, cvec);
        auto v_theta = velocity_graph(gen_vars, path.x_t, t, cond);
        auto v_old_c = ad::constant(v_old);
        auto v_plus = ad::lincomb(v_old_c, v_theta, 1.0 - gamma, gamma);
        auto v_minus = ad::lincomb(v_old_c, v_theta, 1.0 + gamma, -gamma);
        auto u = ad::constant(Tensor::from_vector(path.u_t.vec()));
        const double r = group.normalized[k];
        terms.push_back(
            ad::lincomb(ad::sq_err(v_plus, u), ad::sq_err(v_minus, u), r, 1.0 - r));
    }
    return ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(terms.size()));
}

double nft_loss(const Mlp& net, const Mlp& old_policy, const RolloutGroup& group, double gamma,
                Rng& rng) {
    auto vars = lift(net, false);
    return nft_loss_graph(vars, old_policy, group, gamma, rng)->value[0];
}

NftResult nft_train(Models& models, const Corpus& corpus, const RewardSpec& reward_spec,
                    const NftConfig& cfg) {
    cfg.validate();
    reward_spec.validate();
    if (corpus.train_idx.empty()) throw ContractError("nft: empty training corpus");
    NftResult result;

    const std::size_t image_size = corpus.image_size;
    const std::size_t data_dim = image_size * image_size;
    const std::size_t n_groups = static_cast<std::size_t>(cfg.groups_per_round);

    // fixed rollout condition set: a seeded shuffle of the train split
    std::vector<std::size_t> order = corpus.train_idx;
    Rng shuffle_rng(derive_seed(cfg.seed, 0xA0));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(
                                    shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    if (order.size() > n_groups) order.resize(n_groups);
    result.condition_indices = order;

    struct GroupCtx {
        Condition cond;
        Tensor gt;
    };
    std::vector<GroupCtx> ctx;
    Stage1Config degrade_ranges;  // mild training-time severity defaults
    Rng cond_rng(derive_seed(cfg.seed, 0xD1));
    for (std::size_t idx : order) {
        const CorpusItem& item = corpus.items[idx];
        const DegradationParams params =
            sample_training_degradation(cond_rng, degrade_ranges, image_size);
        const Image degraded = degrade(item.hq, params);
        Condition cond =
            embed_condition(models.anchor, &item.tokens, models.encode(degraded));
        ctx.push_back({std::move(cond), Tensor::from_vector(item.hq.pixels.vec())});
    }

    ParamRefs gen_refs = models.generator_params();
    AdamW opt;
    opt.lr = cfg.lr;
    opt.weight_decay = cfg.weight_decay;
    opt.init(gen_refs);

    Mlp old_policy = models.generator;
    for (int round = 0; round < cfg.rounds; ++round) {
        if (round % cfg.refresh_interval == 0) old_policy = models.generator;
        auto gen_vars = lift(models.generator, true);
        std::vector<ad::VarPtr> terms;
        double sum_raw = 0.0, sum_fid = 0.0, sum_sharp = 0.0, sum_total = 0.0;
        std::size_t n_samples = 0;
        for (std::size_t g = 0; g < ctx.size(); ++g) {
            const std::uint64_t rollout_index =
                cfg.reseed_each_round
                    ? static_cast<std::uint64_t>(round) * ctx.size() + g
                    : static_cast<std::uint64_t>(g);
            const std::uint64_t base_seed = derive_seed(cfg.seed ^ 0xB0B0B0B0ULL, rollout_index);
            const GroupCtx& gc = ctx[g];
            RewardFn reward = [&](const Tensor& sample) {
                return composite_reward(sample, gc.gt, image_size, image_size, reward_spec).total;
            };
            RolloutGroup group = rollout_group(old_policy, gc.cond, cfg, base_seed, data_dim, reward);
            group.normalized = normalize_rewards(group.raw_rewards, cfg.z_mode, cfg.z_const);
            for (const Tensor& sample : group.samples) {
                const RewardBreakdown b =
                    composite_reward(sample, gc.gt, image_size, image_size, reward_spec);
                sum_fid += b.fidelity;
                sum_sharp += b.sharpness;
                sum_total += b.total;
                ++n_samples;
            }
            for (double r : group.raw_rewards) sum_raw += r;
            Rng loss_rng(derive_seed(cfg.seed ^ 0x5EED5EEDULL,
                                     static_cast<std::uint64_t>(round) * ctx.size() + g));
            terms.push_back(nft_loss_graph(gen_vars, old_policy, group, cfg.gamma, loss_rng));
        }
        auto loss = ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(terms.size()));
        if (!loss->value.all_finite())
            throw NumericError("nft loss diverged at round " + std::to_string(round));
        ad::backward(loss);
        GradRefs grads;
        grads.add_mlp(gen_vars);
        opt.step(gen_refs, grads.grads());

        const double inv = 1.0 / static_cast<double>(n_samples);
        result.log.push_back({round, sum_raw * inv, sum_fid * inv, sum_sharp * inv,
                              sum_total * inv, loss->value[0]});
    }
    return result;
}

void write_nft_csv(const std::string& path, const std::vector<NftRow>& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open CSV for writing: " + path);
    out << "round,mean_raw_reward,reward_fidelity,reward_sharpness,reward_total,nft_loss\n";
    out.precision(17);
    for (const auto& row : log)
        out << row.round << ',' << row.mean_raw_reward << ',' << row.reward_fidelity << ','
            << row.reward_sharpness << ',' << row.reward_total << ',' << row.nft_loss << '\n';
    if (!out) throw IoError("failed to write CSV: " + path);
}

}  // namespace prefflow
