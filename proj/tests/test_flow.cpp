#include <doctest.h>

#include <cmath>

#include "prefflow/flow.hpp"
#include "prefflow/models.hpp"

using namespace prefflow;

namespace {

Condition fixed_condition(std::size_t emb_dim, std::size_t z_dim, double fill = 0.1) {
    Condition c;
    c.anchor_emb = Tensor::full({emb_dim}, fill);
    c.z_low = Tensor::full({z_dim}, -fill);
    return c;
}

}  // namespace

TEST_CASE("path endpoints and midpoint are exact") {
    const Tensor x1 = Tensor::from_vector({2.0, 4.0});
    Rng rng(1);
    FlowPath p0 = fm_pair(x1, 0.0, rng);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(p0.x_t[i] == p0.x0[i]);
        CHECK(p0.u_t[i] == x1[i] - p0.x0[i]);
    }
    Rng rng2(2);
    FlowPath p1 = fm_pair(x1, 1.0, rng2);
    for (std::size_t i = 0; i < 2; ++i) CHECK(p1.x_t[i] == x1[i]);

    // deterministic midpoint: force x0 = 0 by reconstructing by hand
    FlowPath mid;
    mid.x0 = Tensor::from_vector({0.0, 0.0});
    mid.x1 = x1;
    mid.t = 0.5;
    Rng rng3(3);
    FlowPath p = fm_pair(x1, 0.5, rng3);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(p.x_t[i] == doctest::Approx(0.5 * p.x0[i] + 0.5 * x1[i]).epsilon(1e-15));
        CHECK(p.u_t[i] == doctest::Approx(x1[i] - p.x0[i]).epsilon(1e-15));
    }
}

TEST_CASE("path reconstruction identities hold to machine precision") {
    Rng rng(4);
    const Tensor x1 = Tensor::from_vector({0.3, -1.2, 2.5});
    for (int i = 0; i < 50; ++i) {
        const double t = rng.uniform();
        FlowPath p = fm_pair(x1, t, rng);
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(std::abs(p.x_t[j] - ((1.0 - t) * p.x0[j] + t * x1[j])) < 1e-15);
            CHECK(std::abs(p.u_t[j] - (x1[j] - p.x0[j])) < 1e-15);
        }
    }
}

TEST_CASE("time embedding layout") {
    const Tensor e = time_embedding(0.25);
    REQUIRE(e.size() == 3);
    CHECK(e[0] == 0.25);
    CHECK(e[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("flow-matching loss is zero for an oracle and positive otherwise") {
    // data dim 2, cond dim 3: a net that cannot represent u exactly has loss > 0
    const std::size_t data_dim = 2;
    Condition cond = fixed_condition(2, 1);
    std::vector<FlowSample> batch;
    batch.push_back({Tensor::from_vector({0.5, 0.5}), cond});
    batch.push_back({Tensor::from_vector({0.1, 0.9}), cond});

    Mlp zero = Mlp::zeros({data_dim + 3 + 3, 4, data_dim});
    Rng rng(5);
    const double loss_zero = fm_loss(zero, batch, rng);
    CHECK(loss_zero > 0.0);

    // zero net on this batch: loss = mean ||u||^2 with the same draws
    Rng rng_ref(5);
    double expected = 0.0;
    for (const auto& s : batch) {
        const double t = rng_ref.uniform();
        FlowPath p = fm_pair(s.x1, t, rng_ref);
        double n2 = 0.0;
        for (std::size_t i = 0; i < p.u_t.size(); ++i) n2 += p.u_t[i] * p.u_t[i];
        expected += n2;
    }
    expected /= static_cast<double>(batch.size());
    CHECK(loss_zero == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("flow-matching loss gradient matches finite differences") {
    Rng init(6);
    Mlp net = Mlp::create({2 + 3 + 3, 8, 2}, init);
    Condition cond = fixed_condition(2, 1);
    std::vector<FlowSample> batch{{Tensor::from_vector({0.2, 0.8}), cond}};

    MlpVars vars = lift(net, true);
    Rng rg(7);
    auto node = fm_loss_graph(vars, batch, rg);
    ad::backward(node);

    Rng probe_rng(8);
    for (int probe = 0; probe < 10; ++probe) {
        const std::size_t layer = static_cast<std::size_t>(probe_rng.uniform_int(0, 1));
        const std::size_t idx = static_cast<std::size_t>(
            probe_rng.uniform_int(0, static_cast<std::int64_t>(net.weights[layer].size()) - 1));
        const double h = 1e-6;
        const double saved = net.weights[layer][idx];
        net.weights[layer][idx] = saved + h;
        Rng r1(7);
        const double up = fm_loss(net, batch, r1);
        net.weights[layer][idx] = saved - h;
        Rng r2(7);
        const double down = fm_loss(net, batch, r2);
        net.weights[layer][idx] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double analytic = vars.weights[layer]->grad[idx];
        const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
        CHECK(std::abs(numeric - analytic) / scale < 1e-6);
    }
}

TEST_CASE("latent consistency loss hand case and symmetry") {
    // encoder = identity on a 2-pixel image via hand weights
    Mlp enc = Mlp::zeros({4, 2});
    enc.weights[0].at(0, 0) = 1.0;
    enc.weights[0].at(1, 1) = 1.0;
    Image a(2, 2), b(2, 2);
    a.at(0, 0) = 1.0;  // encodes to [1, 0]
    b.at(0, 1) = 1.0;  // encodes to [0, 1]
    CHECK(latent_consistency_loss(enc, a, b) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(latent_consistency_loss(enc, b, a) == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(latent_consistency_loss(enc, a, a) == 0.0);
}

TEST_CASE("alignment loss equals the token loss when the flow term is off") {
    Rng rng(9);
    ModelConfig mc;
    Models models = Models::create(mc, 13);
    const Corpus corpus = make_corpus(4, 16, 100, 13);
    const CorpusItem& item = corpus.items[0];
    DegradationParams dp;
    dp.sigma = 1.0;
    dp.factor = 2;
    dp.delta = 3.0;
    dp.quality = 85;
    const Image degraded = degrade(item.hq, dp);

    AlignSample s;
    s.degraded = &degraded;
    s.targets = &item.tokens;
    s.instruction = &item.tokens;
    s.x1 = Tensor::from_vector(item.hq.pixels.vec());
    s.z_low = models.encode(degraded);
    std::vector<AlignSample> batch{s};

    Rng r1(21);
    const double with_alpha0 = align_loss(models.anchor, models.generator, batch, 0.0, r1);
    std::vector<AnchorSample> ce_batch{{&degraded, &item.tokens, &item.tokens}};
    CHECK(with_alpha0 == doctest::Approx(ce_loss(models.anchor, ce_batch)).epsilon(1e-14));

    Rng r2(21);
    const double with_alpha1 = align_loss(models.anchor, models.generator, batch, 1.0, r2);
    CHECK(with_alpha1 > with_alpha0);
}

TEST_CASE("alignment graph rejects a trainable generator") {
    ModelConfig mc;
    Models models = Models::create(mc, 14);
    const Corpus corpus = make_corpus(4, 16, 100, 14);
    const CorpusItem& item = corpus.items[0];
    AlignSample s;
    s.degraded = &item.hq;
    s.targets = &item.tokens;
    s.instruction = nullptr;
    s.x1 = Tensor::from_vector(item.hq.pixels.vec());
    s.z_low = models.encode(item.hq);
    std::vector<AlignSample> batch{s};

    AnchorVars avars = lift(models.anchor, true);
    MlpVars gen_trainable = lift(models.generator, true);
    Rng rng(1);
    CHECK_THROWS_AS(align_loss_graph(models.anchor, avars, gen_trainable, batch, 1.0, rng),
                    ContractError);
}

TEST_CASE("sampler integrates constant fields exactly for any step count") {
    // a pure-bias net is a constant field: x(1) = x0 + c
    const std::size_t dim = 2;
    Mlp net = Mlp::zeros({dim + 3 + 2, dim});
    net.biases[0][0] = 1.5;
    net.biases[0][1] = -0.5;
    Condition cond = fixed_condition(1, 1, 0.0);

    const Tensor one = euler_sample(net, cond, 1, 31, dim);
    const Tensor hundred = euler_sample(net, cond, 100, 31, dim);
    for (std::size_t i = 0; i < dim; ++i)
        CHECK(one[i] == doctest::Approx(hundred[i]).epsilon(1e-12));

    // subtracting the integrated field recovers the initial noise
    Rng noise(31);
    // x0 is drawn inside euler_sample from the given seed; replicate via a
    // second sampler run with the zero field
    Mlp zero = Mlp::zeros({dim + 3 + 2, dim});
    const Tensor x0 = euler_sample(zero, cond, 1, 31, dim);
    CHECK(one[0] == doctest::Approx(x0[0] + 1.5).epsilon(1e-12));
    CHECK(one[1] == doctest::Approx(x0[1] - 0.5).epsilon(1e-12));
}

TEST_CASE("sampler shows the documented left-endpoint bias on v(t) = 2t") {
    // v depends only on t: out = x0 + sum_k (1/n) * 2*(k/n) = x0 + 1 - 1/n
    const std::size_t dim = 1;
    Mlp net = Mlp::zeros({dim + 3 + 2, dim});
    // weight on the raw-t input (first time-embedding slot after x_t)
    net.weights[0].at(0, dim) = 2.0;
    Condition cond = fixed_condition(1, 1, 0.0);
    Mlp zero = Mlp::zeros({dim + 3 + 2, dim});
    const Tensor x0 = euler_sample(zero, cond, 1, 77, dim);
    const Tensor x = euler_sample(net, cond, 1000, 77, dim);
    CHECK(std::abs((x[0] - x0[0]) - 1.0) < 2e-3);
}

TEST_CASE("sampling is bit-deterministic in all inputs") {
    Rng init(10);
    Mlp net = Mlp::create({2 + 3 + 2, 6, 2}, init);
    Condition cond = fixed_condition(1, 1);
    const Tensor a = euler_sample(net, cond, 16, 5, 2);
    const Tensor b = euler_sample(net, cond, 16, 5, 2);
    for (std::size_t i = 0; i < 2; ++i) CHECK(a[i] == b[i]);
    const Tensor c = euler_sample(net, cond, 16, 6, 2);
    CHECK((a[0] != c[0] || a[1] != c[1]));
}

TEST_CASE("divergent fields raise a numeric error") {
    // huge constant velocity compounds across steps but stays finite; use a
    // bias large enough to overflow through repeated doubling via weights
    Mlp net = Mlp::zeros({1 + 3 + 2, 1});
    net.weights[0].at(0, 0) = 1e200;
    net.biases[0][0] = 1e200;
    Condition cond = fixed_condition(1, 1, 0.0);
    CHECK_THROWS_AS(euler_sample(net, cond, 64, 3, 1), NumericError);
}

TEST_CASE("zero-step or zero-rate schedules leave every parameter unchanged") {
    ModelConfig mc;
    mc.gen_hidden = 24;  // keep this test light
    Models models = Models::create(mc, 15);
    const Corpus corpus = make_corpus(4, 16, 100, 15);

    Stage1Config cfg;
    cfg.steps11 = 0;
    cfg.steps12 = 0;
    Models copy = Models::create(mc, 15);
    stage1_train(models, corpus, cfg);
    ParamRefs a = models.all_params();
    ParamRefs b = copy.all_params();
    for (std::size_t i = 0; i < a.count(); ++i)
        for (std::size_t j = 0; j < a.tensors[i]->size(); ++j)
            CHECK((*a.tensors[i])[j] == (*b.tensors[i])[j]);

    Stage1Config zero_lr;
    zero_lr.steps11 = 3;
    zero_lr.steps12 = 3;
    zero_lr.lr11 = 0.0;
    zero_lr.lr12 = 0.0;
    const Stage1Result res = stage1_train(models, corpus, zero_lr);
    for (std::size_t i = 0; i < a.count(); ++i)
        for (std::size_t j = 0; j < a.tensors[i]->size(); ++j)
            CHECK((*a.tensors[i])[j] == (*b.tensors[i])[j]);
    REQUIRE(res.log.size() == 6);
}

TEST_CASE("first stage freezes the generator, second stage freezes the anchor") {
    ModelConfig mc;
    mc.gen_hidden = 24;
    Models models = Models::create(mc, 16);
    const Corpus corpus = make_corpus(4, 16, 100, 16);

    // after stage 1.1 only: generator identical to initialization
    Models ref = Models::create(mc, 16);
    Stage1Config cfg11;
    cfg11.steps11 = 5;
    cfg11.steps12 = 0;
    stage1_train(models, corpus, cfg11);
    {
        ParamRefs g = models.generator_params();
        ParamRefs g0 = ref.generator_params();
        for (std::size_t i = 0; i < g.count(); ++i)
            for (std::size_t j = 0; j < g.tensors[i]->size(); ++j)
                CHECK((*g.tensors[i])[j] == (*g0.tensors[i])[j]);
        // the anchor did move
        ParamRefs an = models.anchor_params();
        ParamRefs an0 = ref.anchor_params();
        double moved = 0.0;
        for (std::size_t i = 0; i < an.count(); ++i)
            for (std::size_t j = 0; j < an.tensors[i]->size(); ++j)
                moved += std::abs((*an.tensors[i])[j] - (*an0.tensors[i])[j]);
        CHECK(moved > 0.0);
    }

    // after stage 1.2 only: anchor bit-identical to its post-1.1 state
    std::vector<NamedTensor> anchor_before = snapshot(models.anchor_params());
    Stage1Config cfg12;
    cfg12.steps11 = 0;
    cfg12.steps12 = 5;
    stage1_train(models, corpus, cfg12);
    ParamRefs an = models.anchor_params();
    for (std::size_t i = 0; i < an.count(); ++i)
        for (std::size_t j = 0; j < an.tensors[i]->size(); ++j)
            CHECK((*an.tensors[i])[j] == anchor_before[i].tensor[j]);
    ParamRefs g = models.generator_params();
    ParamRefs g0 = ref.generator_params();
    double moved = 0.0;
    for (std::size_t i = 0; i < g.count(); ++i)
        for (std::size_t j = 0; j < g.tensors[i]->size(); ++j)
            moved += std::abs((*g.tensors[i])[j] - (*g0.tensors[i])[j]);
    CHECK(moved > 0.0);
}

TEST_CASE("unconditional transport reaches a shifted Gaussian") {
    // 1-D data x1 ~ N(3, 0.25); after training, 1000 Euler-100 samples should
    // land near mean 3 with std 0.5
    Rng data_rng(20);
    Rng init(21);
    Mlp net = Mlp::create({1 + 3 + 2, 32, 1}, init);
    Condition cond = fixed_condition(1, 1, 0.0);

    ParamRefs params;
    params.add_mlp("net", net);
    AdamW opt;
    opt.lr = 3e-3;
    opt.init(params);
    Rng loss_rng(22);
    for (int step = 0; step < 1200; ++step) {
        std::vector<FlowSample> batch;
        for (int b = 0; b < 32; ++b)
            batch.push_back({Tensor::from_vector({data_rng.normal(3.0, 0.5)}), cond});
        MlpVars vars = lift(net, true);
        auto loss = fm_loss_graph(vars, batch, loss_rng);
        ad::backward(loss);
        GradRefs grads;
        grads.add_mlp(vars);
        opt.step(params, grads.grads());
    }

    double sum = 0.0, sum2 = 0.0;
    const int n = 1000;
    for (int i = 0; i < n; ++i) {
        const Tensor x = euler_sample(net, cond, 100, derive_seed(23, static_cast<std::uint64_t>(i)), 1);
        sum += x[0];
        sum2 += x[0] * x[0];
    }
    const double mean = sum / n;
    const double std = std::sqrt(sum2 / n - mean * mean);
    CHECK(std::abs(mean - 3.0) < 0.1);
    CHECK(std::abs(std - 0.5) < 0.1);
}

TEST_CASE("training degradations respect the mild ranges and snap factors") {
    Stage1Config cfg;
    Rng rng(30);
    for (int i = 0; i < 1000; ++i) {
        const DegradationParams p = sample_training_degradation(rng, cfg, 16);
        CHECK(p.sigma <= cfg.sigma_max);
        CHECK(p.factor <= cfg.r_max);
        CHECK(16 % p.factor == 0);
        CHECK(p.delta <= cfg.delta_max);
        CHECK(p.quality >= cfg.q_min);
        p.validate();
    }
}
