#include "prefflow/models.hpp"

#include <algorithm>

namespace prefflow {

Models Models::create(const ModelConfig& cfg, std::uint64_t seed) {
    Models m;
    m.cfg = cfg;
    Rng rng(seed);
    m.anchor = AnchorModel::create(cfg.n_levels, cfg.image_dim(), cfg.feat_dim, cfg.embed_dim,
                                   cfg.anchor_hidden, rng);
    m.encoder = Mlp::create({cfg.image_dim(), cfg.encoder_hidden, cfg.zlow_dim}, rng);
    std::vector<std::size_t> gen_widths;
    gen_widths.push_back(cfg.gen_in_dim());
    for (std::size_t i = 0; i < cfg.gen_layers; ++i) gen_widths.push_back(cfg.gen_hidden);
    gen_widths.push_back(cfg.image_dim());
    m.generator = Mlp::create(gen_widths, rng);
    return m;
}

ParamRefs Models::anchor_params() {
    ParamRefs refs;
    anchor.collect_params(refs);
    return refs;
}

ParamRefs Models::encoder_params() {
    ParamRefs refs;
    refs.add_mlp("encoder", encoder);
    return refs;
}

ParamRefs Models::generator_params() {
    ParamRefs refs;
    refs.add_mlp("generator", generator);
    return refs;
}

ParamRefs Models::all_params() {
    ParamRefs refs;
    anchor.collect_params(refs);
    refs.add_mlp("encoder", encoder);
    refs.add_mlp("generator", generator);
    return refs;
}

void Models::save(const std::string& path) {
    write_checkpoint(path, snapshot(all_params()));
}

void Models::load(const std::string& path) {
    restore(all_params(), read_checkpoint(path));
}

Tensor Models::encode(const Image& img) const {
    return encoder.eval(Tensor::from_vector(img.pixels.vec()));
}

Corpus make_corpus(int n_levels, std::size_t image_size, std::size_t holdout_count,
                   std::uint64_t seed) {
    Corpus corpus;
    corpus.image_size = image_size;
    corpus.n_levels = n_levels;
    const auto specs = enumerate_specs(n_levels);
    corpus.items.reserve(specs.size());
    for (const auto& spec : specs)
        corpus.items.push_back({spec, spec_to_tokens(spec), render(spec, image_size)});

    if (holdout_count >= corpus.items.size())
        throw ContractError("holdout count must be smaller than the corpus");
    std::vector<std::size_t> order(corpus.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0xC0));
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    corpus.holdout_idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(holdout_count));
    corpus.train_idx.assign(order.begin() + static_cast<std::ptrdiff_t>(holdout_count), order.end());
    return corpus;
}

}  // namespace prefflow
