#include <doctest.h>

#include <cmath>

#include "prefflow/nft.hpp"

using namespace prefflow;

namespace {

Condition fixed_condition(std::size_t emb_dim, std::size_t z_dim, double fill = 0.1) {
    Condition c;
    c.anchor_emb = Tensor::full({emb_dim}, fill);
    c.z_low = Tensor::full({z_dim}, -fill);
    return c;
}

Tensor random_tensor(std::size_t n, Rng& rng) {
    Tensor t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = rng.normal();
    return t;
}

double grad_norm(const std::vector<Tensor>& grads) {
    double s = 0.0;
    for (const Tensor& g : grads)
        for (std::size_t i = 0; i < g.size(); ++i) s += g[i] * g[i];
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("velocity proxies: hand case and gamma extremes") {
    Tensor v_old = Tensor::from_vector({0.0});
    Tensor v_theta = Tensor::from_vector({2.0});
    Tensor plus, minus;

    implicit_proxies(v_old, v_theta, 0.5, plus, minus);
    CHECK(plus[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(minus[0] == doctest::Approx(-1.0).epsilon(1e-15));

    implicit_proxies(v_old, v_theta, 1.0, plus, minus);
    CHECK(plus[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(minus[0] == doctest::Approx(-2.0).epsilon(1e-15));

    implicit_proxies(v_old, v_theta, 1e-12, plus, minus);
    CHECK(plus[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(minus[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("proxy sum identity holds for random tensors and all gamma") {
    Rng rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor v_old = random_tensor(16, rng);
        const Tensor v_theta = random_tensor(16, rng);
        const double gamma = rng.uniform(1e-6, 1.0);
        Tensor plus, minus;
        implicit_proxies(v_old, v_theta, gamma, plus, minus);
        for (std::size_t i = 0; i < 16; ++i)
            CHECK(std::abs(plus[i] + minus[i] - 2.0 * v_old[i]) <= 1e-12);
    }
}

TEST_CASE("improvement-direction diagnostic: hand case and identity residual") {
    const Tensor v_old = Tensor::from_vector({0.0});
    const Tensor v_theta = Tensor::from_vector({2.0});
    DeltaReport rep = delta_diagnostic(v_old, v_theta, 0.5);
    CHECK(rep.d_plus[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rep.d_minus[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(rep.residual == 0.0);

    DeltaReport same = delta_diagnostic(v_theta, v_theta, 0.7);
    CHECK(same.d_plus[0] == 0.0);
    CHECK(same.d_minus[0] == 0.0);

    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor a = random_tensor(8, rng);
        const Tensor b = random_tensor(8, rng);
        const double gamma = rng.uniform(0.01, 1.0);
        CHECK(delta_diagnostic(a, b, gamma).residual <= 1e-12);
    }
}

TEST_CASE("reward normalization: equal groups, two-point group, hand clip case") {
    const auto equal = normalize_rewards({0.2, 0.2, 0.2}, ZMode::GroupStd);
    for (double r : equal) CHECK(r == 0.5);

    const auto pair = normalize_rewards({0.0, 1.0}, ZMode::GroupStd);
    CHECK(pair[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(pair[1] == doctest::Approx(1.0).epsilon(1e-12));

    const auto trio = normalize_rewards({0.2, 0.4, 0.9}, ZMode::GroupStd);
    CHECK(trio[0] == doctest::Approx(0.0).epsilon(1e-3));
    CHECK(trio[1] == doctest::Approx(0.3302).epsilon(1e-3));
    CHECK(trio[2] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("normalized rewards stay in the unit interval for random groups") {
    Rng rng(3);
    for (int trial = 0; trial < 10000; ++trial) {
        std::vector<double> raw(static_cast<std::size_t>(rng.uniform_int(2, 9)));
        for (double& v : raw) v = rng.normal(0.0, 10.0);
        for (double r : normalize_rewards(raw, ZMode::GroupStd)) {
            CHECK(r >= 0.0);
            CHECK(r <= 1.0);
        }
    }
}

TEST_CASE("fixed-constant scaling divides by the given constant") {
    const auto r = normalize_rewards({0.0, 1.0}, ZMode::FixedConstant, 2.0);
    // mean 0.5, (raw - mean)/2 = ±0.25 -> 0.5 ± 0.125
    CHECK(r[0] == doctest::Approx(0.375).epsilon(1e-12));
    CHECK(r[1] == doctest::Approx(0.625).epsilon(1e-12));
}

TEST_CASE("rollout groups are reproducible and use distinct seeds") {
    Rng init(4);
    Mlp policy = Mlp::create({2 + 3 + 2, 8, 2}, init);
    Condition cond = fixed_condition(1, 1);
    NftConfig cfg;
    cfg.k = 4;
    auto reward = [](const Tensor& x) { return x[0]; };

    const RolloutGroup a = rollout_group(policy, cond, cfg, 50, 2, reward);
    const RolloutGroup b = rollout_group(policy, cond, cfg, 50, 2, reward);
    REQUIRE(a.samples.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(a.seeds[k] == b.seeds[k]);
        for (std::size_t i = 0; i < 2; ++i) CHECK(a.samples[k][i] == b.samples[k][i]);
    }
    CHECK(a.seeds[0] != a.seeds[1]);
    CHECK((a.samples[0][0] != a.samples[1][0] || a.samples[0][1] != a.samples[1][1]));
}

TEST_CASE("constant rewards inside a group normalize to one half") {
    Rng init(5);
    Mlp policy = Mlp::create({2 + 3 + 2, 8, 2}, init);
    Condition cond = fixed_condition(1, 1);
    NftConfig cfg;
    cfg.k = 3;
    const RolloutGroup g =
        rollout_group(policy, cond, cfg, 51, 2, [](const Tensor&) { return 0.7; });
    for (double r : g.normalized) CHECK(r == 0.5);
}

TEST_CASE("config validation pins the documented ranges") {
    NftConfig cfg;
    cfg.gamma = 1.5;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("gamma must be in (0,1]"),
                         ContractError);
    cfg.gamma = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg.gamma = 0.5;
    cfg.k = 1;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
    cfg.k = 2;
    cfg.refresh_interval = 0;
    CHECK_THROWS_AS(cfg.validate(), ContractError);
}

TEST_CASE("extreme normalized rewards select a single proxy branch") {
    Rng init(6);
    Mlp theta = Mlp::create({2 + 3 + 2, 8, 2}, init);
    Mlp old_policy = Mlp::create({2 + 3 + 2, 8, 2}, init);
    Condition cond = fixed_condition(1, 1);
    NftConfig cfg;
    cfg.k = 3;
    RolloutGroup g = rollout_group(old_policy, cond, cfg, 52, 2, [](const Tensor& x) { return x[0]; });

    // all r = 1: only the positive branch contributes
    for (double& r : g.normalized) r = 1.0;
    Rng r1(60);
    const double loss_pos = nft_loss(theta, old_policy, g, 0.5, r1);

    // manually accumulate mean ||v_plus - u||^2 on the same draws
    Rng r2(60);
    double expected = 0.0;
    for (std::size_t k = 0; k < g.samples.size(); ++k) {
        const double t = r2.uniform();
        FlowPath p = fm_pair(g.samples[k], t, r2);
        const Tensor v_old = velocity_eval(old_policy, p.x_t, t, cond.vec());
        const Tensor v_th = velocity_eval(theta, p.x_t, t, cond.vec());
        Tensor plus, minus;
        implicit_proxies(v_old, v_th, 0.5, plus, minus);
        double n2 = 0.0;
        for (std::size_t i = 0; i < plus.size(); ++i) {
            const double d = plus[i] - p.u_t[i];
            n2 += d * d;
        }
        expected += n2;
    }
    expected /= static_cast<double>(g.samples.size());
    CHECK(loss_pos == doctest::Approx(expected).epsilon(1e-12));

    // all r = 0: the negative branch
    for (double& r : g.normalized) r = 0.0;
    Rng r3(60);
    const double loss_neg = nft_loss(theta, old_policy, g, 0.5, r3);
    CHECK(loss_neg != loss_pos);
}

TEST_CASE("preference loss gradient vanishes at the snapshot with balanced rewards") {
    Rng init(7);
    Mlp theta = Mlp::create({2 + 3 + 2, 8, 2}, init);
    Mlp old_policy = theta;  // theta == theta_old
    Condition cond = fixed_condition(1, 1);
    NftConfig cfg;
    cfg.k = 4;
    RolloutGroup g = rollout_group(old_policy, cond, cfg, 53, 2, [](const Tensor& x) { return x[0]; });
    for (double& r : g.normalized) r = 0.5;

    MlpVars vars = lift(theta, true);
    Rng r1(61);
    auto loss = nft_loss_graph(vars, old_policy, g, 0.5, r1);
    ad::backward(loss);
    GradRefs grads;
    grads.add_mlp(vars);
    const double at_snapshot = grad_norm(grads.grads());

    // perturb theta and recompute on the same draws
    Mlp perturbed = theta;
    Rng noise(62);
    for (auto& w : perturbed.weights)
        for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.1 * noise.normal();
    MlpVars pvars = lift(perturbed, true);
    Rng r2(61);
    auto ploss = nft_loss_graph(pvars, old_policy, g, 0.5, r2);
    ad::backward(ploss);
    GradRefs pgrads;
    pgrads.add_mlp(pvars);
    const double at_perturbed = grad_norm(pgrads.grads());

    REQUIRE(at_perturbed > 0.0);
    CHECK(at_snapshot <= 1e-8 * at_perturbed);
}

TEST_CASE("with full reward and unit gamma the loss reduces to flow matching") {
    Rng init(8);
    Mlp theta = Mlp::create({2 + 3 + 2, 8, 2}, init);
    Rng init2(9);
    Mlp old_policy = Mlp::create({2 + 3 + 2, 8, 2}, init2);
    Condition cond = fixed_condition(1, 1);
    NftConfig cfg;
    cfg.k = 4;
    RolloutGroup g = rollout_group(old_policy, cond, cfg, 54, 2, [](const Tensor& x) { return x[0]; });
    for (double& r : g.normalized) r = 1.0;

    Rng r1(63);
    const double nft = nft_loss(theta, old_policy, g, 1.0, r1);

    std::vector<FlowSample> batch;
    for (const Tensor& s : g.samples) batch.push_back({s, cond});
    Rng r2(63);
    const double fm = fm_loss(theta, batch, r2);
    CHECK(nft == fm);  // bit-exact on shared draws
}

TEST_CASE("preference loss gradient matches finite differences") {
    Rng init(10);
    Mlp theta = Mlp::create({2 + 3 + 2, 6, 2}, init);
    Rng init2(11);
    Mlp old_policy = Mlp::create({2 + 3 + 2, 6, 2}, init2);
    Condition cond = fixed_condition(1, 1);
    NftConfig cfg;
    cfg.k = 3;
    RolloutGroup g = rollout_group(old_policy, cond, cfg, 55, 2, [](const Tensor& x) { return x[0]; });

    MlpVars vars = lift(theta, true);
    Rng r0(64);
    auto node = nft_loss_graph(vars, old_policy, g, 0.5, r0);
    ad::backward(node);

    Rng probe_rng(65);
    for (int probe = 0; probe < 10; ++probe) {
        const std::size_t layer = static_cast<std::size_t>(probe_rng.uniform_int(0, 1));
        const std::size_t idx = static_cast<std::size_t>(
            probe_rng.uniform_int(0, static_cast<std::int64_t>(theta.weights[layer].size()) - 1));
        const double h = 1e-6;
        const double saved = theta.weights[layer][idx];
        theta.weights[layer][idx] = saved + h;
        Rng ra(64);
        const double up = nft_loss(theta, old_policy, g, 0.5, ra);
        theta.weights[layer][idx] = saved - h;
        Rng rb(64);
        const double down = nft_loss(theta, old_policy, g, 0.5, rb);
        theta.weights[layer][idx] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = vars.weights[layer]->grad[idx];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        CHECK(std::abs(numeric - analytic) / scale < 1e-6);
    }
}

TEST_CASE("zero rounds leave the policy untouched") {
    ModelConfig mc;
    mc.gen_hidden = 24;
    Models models = Models::create(mc, 12);
    Models copy = Models::create(mc, 12);
    const Corpus corpus = make_corpus(4, 16, 100, 12);
    NftConfig cfg;
    cfg.rounds = 0;
    RewardSpec reward;
    const NftResult res = nft_train(models, corpus, reward, cfg);
    CHECK(res.log.empty());
    ParamRefs a = models.generator_params();
    ParamRefs b = copy.generator_params();
    for (std::size_t i = 0; i < a.count(); ++i)
        for (std::size_t j = 0; j < a.tensors[i]->size(); ++j)
            CHECK((*a.tensors[i])[j] == (*b.tensors[i])[j]);
}

TEST_CASE("zero learning rate gives a flat reward trajectory") {
    ModelConfig mc;
    mc.gen_hidden = 24;
    Models models = Models::create(mc, 13);
    const Corpus corpus = make_corpus(4, 16, 100, 13);
    NftConfig cfg;
    cfg.rounds = 4;
    cfg.lr = 0.0;
    cfg.groups_per_round = 2;
    cfg.k = 2;
    cfg.sampler_steps = 4;
    RewardSpec reward;
    const NftResult res = nft_train(models, corpus, reward, cfg);
    REQUIRE(res.log.size() == 4);
    for (std::size_t i = 1; i < res.log.size(); ++i)
        CHECK(res.log[i].mean_raw_reward == res.log[0].mean_raw_reward);
}
