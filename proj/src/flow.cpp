#include "prefflow/flow.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace prefflow {

FlowPath fm_pair(const Tensor& x1, double t, Rng& rng) {
    if (t < 0.0 || t > 1.0) throw ContractError("fm_pair: t must be in [0,1]");
    FlowPath p;
    p.x1 = x1;
    p.t = t;
    p.x0 = Tensor(x1.shape());
    for (double& v : p.x0.vec()) v = rng.normal();
    p.x_t = Tensor(x1.shape());
    for (std::size_t i = 0; i < x1.size(); ++i)
        p.x_t[i] = (1.0 - t) * p.x0[i] + t * x1[i];
    p.u_t = x1 - p.x0;
    return p;
}

Tensor time_embedding(double t) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    return Tensor({3}, {t, std::sin(two_pi * t), std::cos(two_pi * t)});
}

namespace {

Tensor assemble_velocity_input(const Tensor& x_t, double t, const Tensor& cond) {
    const Tensor temb = time_embedding(t);
    Tensor in({x_t.size() + 3 + cond.size()});
    std::copy(x_t.vec().begin(), x_t.vec().end(), in.vec().begin());
    std::copy(temb.vec().begin(), temb.vec().end(), in.vec().begin() + x_t.size());
    std::copy(cond.vec().begin(), cond.vec().end(), in.vec().begin() + x_t.size() + 3);
    return in;
}

}  // namespace

Tensor velocity_eval(const Mlp& net, const Tensor& x_t, double t, const Tensor& cond) {
    return net.eval(assemble_velocity_input(x_t, t, cond));
}

ad::VarPtr velocity_graph(const MlpVars& net, const Tensor& x_t, double t,
                          const ad::VarPtr& cond) {
    auto xt = ad::constant(Tensor::from_vector(x_t.vec()));
    auto temb = ad::constant(time_embedding(t));
    return mlp_forward(net, ad::concat({xt, temb, cond}));
}

ad::VarPtr fm_loss_graph(const MlpVars& net, const std::vector<FlowSample>& batch, Rng& rng) {
    if (batch.empty()) throw ContractError("fm_loss: empty batch");
    std::vector<ad::VarPtr> terms;
    for (const auto& sample : batch) {
        const double t = rng.uniform();
        const FlowPath path = fm_pair(sample.x1, t, rng);
        auto cond = ad::constant(sample.cond.vec());
        auto v = velocity_graph(net, path.x_t, t, cond);
        terms.push_back(ad::sq_err(v, ad::constant(Tensor::from_vector(path.u_t.vec()))));
    }
    return ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(batch.size()));
}

double fm_loss(const Mlp& net, const std::vector<FlowSample>& batch, Rng& rng) {
    auto vars = lift(net, false);
    return fm_loss_graph(vars, batch, rng)->value[0];
}

ad::VarPtr latent_consistency_loss_graph(const MlpVars& encoder, const Image& y, const Image& x) {
    auto zy = mlp_forward(encoder, ad::constant(Tensor::from_vector(y.pixels.vec())));
    auto zx = mlp_forward(encoder, ad::constant(Tensor::from_vector(x.pixels.vec())));
    return ad::sq_err(zy, zx);
}

double latent_consistency_loss(const Mlp& encoder, const Image& y, const Image& x) {
    auto vars = lift(encoder, false);
    return latent_consistency_loss_graph(vars, y, x)->value[0];
}

ad::VarPtr align_loss_graph(const AnchorModel& anchor, const AnchorVars& anchor_vars,
                            const MlpVars& gen_frozen, const std::vector<AlignSample>& batch,
                            double alpha, Rng& rng) {
    if (batch.empty()) throw ContractError("align_loss: empty batch");
    if (alpha < 0.0) throw ContractError("align_loss: alpha must be >= 0");
    for (const auto& w : gen_frozen.weights)
        if (w->trainable) throw ContractError("align_loss: generator must be frozen");
    for (const auto& b : gen_frozen.biases)
        if (b->trainable) throw ContractError("align_loss: generator must be frozen");

    std::vector<AnchorSample> ce_batch;
    ce_batch.reserve(batch.size());
    for (const auto& s : batch) ce_batch.push_back({s.degraded, s.targets, s.instruction});
    auto ce = ce_loss_graph(anchor, anchor_vars, ce_batch);
    if (alpha == 0.0) return ce;

    std::vector<ad::VarPtr> diff_terms;
    for (const auto& s : batch) {
        const double t = rng.uniform();
        const FlowPath path = fm_pair(s.x1, t, rng);
        auto emb = ad::embed_mean(anchor_vars.embed, s.targets->ids);
        auto cond = ad::concat({emb, ad::constant(Tensor::from_vector(s.z_low.vec()))});
        auto v = velocity_graph(gen_frozen, path.x_t, t, cond);
        diff_terms.push_back(ad::sq_err(v, ad::constant(Tensor::from_vector(path.u_t.vec()))));
    }
    auto diff = ad::scale(ad::add_n(diff_terms), 1.0 / static_cast<double>(batch.size()));
    return ad::lincomb(ce, diff, 1.0, alpha);
}

double align_loss(const AnchorModel& anchor, const Mlp& generator,
                  const std::vector<AlignSample>& batch, double alpha, Rng& rng) {
    auto avars = lift(anchor, false);
    auto gvars = lift(generator, false);
    return align_loss_graph(anchor, avars, gvars, batch, alpha, rng)->value[0];
}

Tensor euler_sample(const Mlp& net, const Condition& cond, int steps, std::uint64_t seed,
                    std::size_t data_dim) {
    if (steps < 1) throw ContractError("euler_sample: steps must be >= 1");
    Rng rng(seed);
    Tensor x({data_dim});
    for (double& v : x.vec()) v = rng.normal();
    const Tensor cvec = cond.vec();
    const double dt = 1.0 / static_cast<double>(steps);
    for (int k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        const Tensor v = velocity_eval(net, x, t, cvec);
        for (std::size_t i = 0; i < data_dim; ++i) x[i] += dt * v[i];
        if (!x.all_finite())
            throw NumericError("euler_sample diverged at step " + std::to_string(k));
    }
    return x;
}

void Stage1Config::validate() const {
    if (alpha < 0.0) throw ContractError("stage1: alpha must be >= 0");
    if (beta < 0.0) throw ContractError("stage1: beta must be >= 0");
    if (lr11 < 0.0 || lr12 < 0.0) throw ContractError("stage1: learning rates must be >= 0");
    if (steps11 < 0 || steps12 < 0) throw ContractError("stage1: step counts must be >= 0");
    if (batch < 1) throw ContractError("stage1: batch must be >= 1");
    if (p_txt < 0.0 || p_txt > 1.0) throw ContractError("stage1: p_txt must be in [0,1]");
    if (p_rec < 0.0 || p_rec > 1.0) throw ContractError("stage1: p_rec must be in [0,1]");
}

DegradationParams sample_training_degradation(Rng& rng, const Stage1Config& cfg,
                                              std::size_t image_size) {
    DegradationParams p;
    p.sigma = rng.uniform(0.5, cfg.sigma_max);
    p.factor = snap_factor(static_cast<int>(rng.uniform_int(1, cfg.r_max)), image_size, image_size);
    p.delta = rng.uniform(0.0, cfg.delta_max);
    p.quality = static_cast<int>(rng.uniform_int(cfg.q_min, 100));
    p.seed = rng.next_u64();
    return p;
}

Stage1Result stage1_train(Models& models, const Corpus& corpus, const Stage1Config& cfg) {
    cfg.validate();
    if (corpus.train_idx.empty()) throw ContractError("stage1: empty training corpus");
    Stage1Result result;
    Rng rng(derive_seed(cfg.seed, 0x51));
    const std::size_t image_size = corpus.image_size;

    struct DrawnSample {
        const CorpusItem* item;
        Image degraded;
        bool instruction_present;
    };
    auto draw_batch = [&](int n) {
        std::vector<DrawnSample> out;
        out.reserve(static_cast<std::size_t>(n));
        for (int b = 0; b < n; ++b) {
            const std::size_t idx = corpus.train_idx[static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(corpus.train_idx.size()) - 1))];
            const CorpusItem& item = corpus.items[idx];
            const DegradationParams params = sample_training_degradation(rng, cfg, image_size);
            Image degraded = maybe_bypass(item.hq, params, cfg.p_rec, rng);
            const bool present = drop_instruction(rng, cfg.p_txt);
            out.push_back({&item, std::move(degraded), present});
        }
        return out;
    };

    int step = 0;

    // Stage 1.1: optimize anchor on L_CE + alpha * L_diff, generator frozen.
    {
        ParamRefs anchor_refs = models.anchor_params();
        AdamW opt;
        opt.lr = cfg.lr11;
        opt.weight_decay = cfg.weight_decay;
        opt.init(anchor_refs);
        for (int s = 0; s < cfg.steps11; ++s) {
            auto drawn = draw_batch(cfg.batch);
            std::vector<AlignSample> batch;
            batch.reserve(drawn.size());
            for (auto& d : drawn)
                batch.push_back({&d.degraded, &d.item->tokens,
                                 d.instruction_present ? &d.item->tokens : nullptr,
                                 Tensor::from_vector(d.item->hq.pixels.vec()),
                                 models.encode(d.degraded)});
            auto anchor_vars = lift(models.anchor, true);
            auto gen_vars = lift(models.generator, false);
            std::vector<AnchorSample> ce_batch;
            for (const auto& b : batch) ce_batch.push_back({b.degraded, b.targets, b.instruction});
            auto ce = ce_loss_graph(models.anchor, anchor_vars, ce_batch);
            std::vector<ad::VarPtr> diff_terms;
            for (const auto& b : batch) {
                const double t = rng.uniform();
                const FlowPath path = fm_pair(b.x1, t, rng);
                auto emb = ad::embed_mean(anchor_vars.embed, b.targets->ids);
                auto cond = ad::concat({emb, ad::constant(Tensor::from_vector(b.z_low.vec()))});
                auto v = velocity_graph(gen_vars, path.x_t, t, cond);
                diff_terms.push_back(
                    ad::sq_err(v, ad::constant(Tensor::from_vector(path.u_t.vec()))));
            }
            auto diff = ad::scale(ad::add_n(diff_terms), 1.0 / static_cast<double>(batch.size()));
            auto loss = ad::lincomb(ce, diff, 1.0, cfg.alpha);
            if (!loss->value.all_finite())
                throw NumericError("stage 1.1 loss diverged at step " + std::to_string(s));
            ad::backward(loss);
            GradRefs grads;
            collect_grads(anchor_vars, grads);
            opt.step(anchor_refs, grads.grads());
            result.log.push_back({++step, ce->value[0], diff->value[0], 0.0, loss->value[0]});
        }
    }

    // Stage 1.2: optimize generator + encoder on L_diff + beta * L_mse, anchor frozen.
    {
        ParamRefs refs;
        refs.add_mlp("generator", models.generator);
        refs.add_mlp("encoder", models.encoder);
        AdamW opt;
        opt.lr = cfg.lr12;
        opt.weight_decay = cfg.weight_decay;
        opt.init(refs);
        std::vector<double> diff_log;
        for (int s = 0; s < cfg.steps12; ++s) {
            auto drawn = draw_batch(cfg.batch);
            auto gen_vars = lift(models.generator, true);
            auto enc_vars = lift(models.encoder, true);
            std::vector<ad::VarPtr> diff_terms, mse_terms;
            for (auto& d : drawn) {
                const double t = rng.uniform();
                const FlowPath path =
                    fm_pair(Tensor::from_vector(d.item->hq.pixels.vec()), t, rng);
                auto z_low = mlp_forward(
                    enc_vars, ad::constant(Tensor::from_vector(d.degraded.pixels.vec())));
                ad::VarPtr emb =
                    d.instruction_present
                        ? ad::embed_mean(ad::constant(models.anchor.embed), d.item->tokens.ids)
                        : ad::constant(models.anchor.null_embed);
                auto cond = ad::concat({emb, z_low});
                auto v = velocity_graph(gen_vars, path.x_t, t, cond);
                diff_terms.push_back(
                    ad::sq_err(v, ad::constant(Tensor::from_vector(path.u_t.vec()))));
                mse_terms.push_back(latent_consistency_loss_graph(enc_vars, d.degraded, d.item->hq));
            }
            const double inv_b = 1.0 / static_cast<double>(drawn.size());
            auto l_diff = ad::scale(ad::add_n(diff_terms), inv_b);
            auto l_mse = ad::scale(ad::add_n(mse_terms), inv_b);
            auto loss = ad::lincomb(l_diff, l_mse, 1.0, cfg.beta);
            if (!loss->value.all_finite())
                throw NumericError("stage 1.2 loss diverged at step " + std::to_string(s));
            ad::backward(loss);
            GradRefs grads;
            grads.add_mlp(gen_vars);
            grads.add_mlp(enc_vars);
            opt.step(refs, grads.grads());
            diff_log.push_back(l_diff->value[0]);
            result.log.push_back({++step, 0.0, l_diff->value[0], l_mse->value[0], loss->value[0]});
        }
        if (!diff_log.empty()) {
            const std::size_t window = std::min<std::size_t>(20, diff_log.size());
            double head = 0.0, tail = 0.0;
            for (std::size_t i = 0; i < window; ++i) {
                head += diff_log[i];
                tail += diff_log[diff_log.size() - 1 - i];
            }
            result.initial_flow_loss = head / static_cast<double>(window);
            result.final_flow_loss = tail / static_cast<double>(window);
        }
    }
    return result;
}

void write_stage1_csv(const std::string& path, const std::vector<Stage1Row>& log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open CSV for writing: " + path);
    out << "step,l_ce,l_diff,l_mse,l_total\n";
    out.precision(17);
    for (const auto& row : log)
        out << row.step << ',' << row.l_ce << ',' << row.l_diff << ',' << row.l_mse << ','
            << row.l_total << '\n';
    if (!out) throw IoError("failed to write CSV: " + path);
}

}  // namespace prefflow
