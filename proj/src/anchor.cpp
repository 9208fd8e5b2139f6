#include "prefflow/anchor.hpp"

#include <cmath>

namespace prefflow {

Tensor Condition::vec() const {
    Tensor out({anchor_emb.size() + z_low.size()});
    std::copy(anchor_emb.vec().begin(), anchor_emb.vec().end(), out.vec().begin());
    std::copy(z_low.vec().begin(), z_low.vec().end(), out.vec().begin() + anchor_emb.size());
    return out;
}

AnchorModel AnchorModel::create(int n_levels, std::size_t image_dim, std::size_t feat_dim,
                                std::size_t embed_dim, std::size_t hidden, Rng& rng) {
    AnchorModel m;
    m.n_levels = n_levels;
    m.image_dim = image_dim;
    m.feat_dim = feat_dim;
    m.embed_dim = embed_dim;
    m.projector = Mlp::create({image_dim, hidden, feat_dim}, rng);
    const std::size_t V = m.vocab();
    m.embed = Tensor({V, embed_dim});
    const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    for (double& x : m.embed.vec()) x = rng.uniform(-bound, bound);
    m.null_embed = Tensor({embed_dim});
    for (double& x : m.null_embed.vec()) x = rng.uniform(-bound, bound);
    const std::size_t head_in = feat_dim + 2 * embed_dim;
    for (std::size_t i = 0; i < m.positions(); ++i)
        m.heads.push_back(Mlp::create({head_in, hidden, V}, rng));
    return m;
}

void AnchorModel::collect_params(ParamRefs& refs) {
    refs.add_mlp("anchor.projector", projector);
    refs.add("anchor.embed", &embed);
    refs.add("anchor.null_embed", &null_embed);
    for (std::size_t i = 0; i < heads.size(); ++i)
        refs.add_mlp("anchor.head" + std::to_string(i), heads[i]);
}

AnchorVars lift(const AnchorModel& model, bool trainable) {
    AnchorVars v;
    v.projector = lift(model.projector, trainable);
    v.embed = trainable ? ad::leaf(model.embed) : ad::constant(model.embed);
    v.null_embed = trainable ? ad::leaf(model.null_embed) : ad::constant(model.null_embed);
    for (const auto& h : model.heads) v.heads.push_back(lift(h, trainable));
    return v;
}

void collect_grads(const AnchorVars& vars, GradRefs& grads) {
    grads.add_mlp(vars.projector);
    grads.add(vars.embed);
    grads.add(vars.null_embed);
    for (const auto& h : vars.heads) grads.add_mlp(h);
}

namespace {

ad::VarPtr head_input(const AnchorModel& model, const AnchorVars& vars, const Image& degraded,
                      const std::vector<int>& prefix, const SemanticTokens* instruction) {
    if (degraded.pixels.size() != model.image_dim)
        throw ContractError("anchor: degraded image size mismatch");
    auto pixels = ad::constant(Tensor::from_vector(degraded.pixels.vec()));
    auto feats = mlp_forward(vars.projector, pixels);
    ad::VarPtr prefix_emb = prefix.empty()
                                ? ad::constant(Tensor::zeros({model.embed_dim}))
                                : ad::embed_mean(vars.embed, prefix);
    ad::VarPtr instr_emb = instruction == nullptr
                               ? vars.null_embed
                               : ad::embed_mean(vars.embed, instruction->ids);
    return ad::concat({feats, prefix_emb, instr_emb});
}

}  // namespace

ad::VarPtr ntp_logits_graph(const AnchorModel& model, const AnchorVars& vars,
                            const Image& degraded, const std::vector<int>& prefix,
                            const SemanticTokens* instruction) {
    if (prefix.size() >= model.positions())
        throw ContractError("anchor: prefix length must be < number of positions");
    const std::size_t pos = prefix.size();
    auto input = head_input(model, vars, degraded, prefix, instruction);
    return mlp_forward(vars.heads[pos], input);
}

Tensor ntp_logits(const AnchorModel& model, const Image& degraded,
                  const std::vector<int>& prefix, const SemanticTokens* instruction) {
    auto vars = lift(model, false);
    return ntp_logits_graph(model, vars, degraded, prefix, instruction)->value;
}

ad::VarPtr ce_loss_graph(const AnchorModel& model, const AnchorVars& vars,
                         const std::vector<AnchorSample>& batch) {
    if (batch.empty()) throw ContractError("ce_loss: empty batch");
    std::vector<ad::VarPtr> terms;
    std::size_t token_count = 0;
    for (const auto& sample : batch) {
        if (sample.targets->ids.size() != model.positions())
            throw ContractError("ce_loss: target length mismatch");
        std::vector<int> prefix;
        for (std::size_t pos = 0; pos < model.positions(); ++pos) {
            auto logits = ntp_logits_graph(model, vars, *sample.degraded, prefix, sample.instruction);
            terms.push_back(ad::softmax_ce(logits, sample.targets->ids[pos]));
            prefix.push_back(sample.targets->ids[pos]);
            ++token_count;
        }
    }
    return ad::scale(ad::add_n(terms), 1.0 / static_cast<double>(token_count));
}

double ce_loss(const AnchorModel& model, const std::vector<AnchorSample>& batch) {
    auto vars = lift(model, false);
    return ce_loss_graph(model, vars, batch)->value[0];
}

SemanticTokens generate_tokens(const AnchorModel& model, const Image& degraded,
                               const SemanticTokens* instruction) {
    SemanticTokens out;
    std::vector<int> prefix;
    for (std::size_t pos = 0; pos < model.positions(); ++pos) {
        const Tensor logits = ntp_logits(model, degraded, prefix, instruction);
        const int base = static_cast<int>(pos) * model.n_levels;
        int best = base;
        for (int id = base + 1; id < base + model.n_levels; ++id)
            if (logits[static_cast<std::size_t>(id)] > logits[static_cast<std::size_t>(best)])
                best = id;
        out.ids.push_back(best);
        prefix.push_back(best);
    }
    return out;
}

bool drop_instruction(Rng& rng, double p_txt) {
    if (p_txt < 0.0 || p_txt > 1.0) throw ContractError("p_txt must be in [0,1]");
    return rng.uniform() < p_txt;  // true: instruction present
}

Condition embed_condition(const AnchorModel& model, const SemanticTokens* tokens,
                          const Tensor& z_low) {
    Condition c;
    c.z_low = z_low;
    if (tokens == nullptr) {
        c.anchor_emb = model.null_embed;
        c.is_null = true;
        return c;
    }
    Tensor pooled({model.embed_dim});
    for (int id : tokens->ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= model.vocab())
            throw ContractError("embed_condition: token id out of vocabulary");
        for (std::size_t j = 0; j < model.embed_dim; ++j)
            pooled[j] += model.embed.at(static_cast<std::size_t>(id), j);
    }
    pooled *= 1.0 / static_cast<double>(tokens->ids.size());
    c.anchor_emb = std::move(pooled);
    return c;
}

}  // namespace prefflow
