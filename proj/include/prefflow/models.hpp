#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefflow/anchor.hpp"
#include "prefflow/nn.hpp"
#include "prefflow/toyfaces.hpp"

namespace prefflow {

struct ModelConfig {
    int n_levels = 4;
    std::size_t image_size = 16;
    std::size_t anchor_hidden = 32;
    std::size_t feat_dim = 16;
    std::size_t embed_dim = 8;
    std::size_t zlow_dim = 8;
    std::size_t encoder_hidden = 32;
    std::size_t gen_hidden = 192;
    std::size_t gen_layers = 2;

    std::size_t image_dim() const { return image_size * image_size; }
    std::size_t cond_dim() const { return embed_dim + zlow_dim; }
    // velocity net input: x_t ++ (t, sin 2*pi*t, cos 2*pi*t) ++ condition
    std::size_t gen_in_dim() const { return image_dim() + 3 + cond_dim(); }
};

// The full toy model stack: semantic anchor, latent encoder, velocity net.
struct Models {
    ModelConfig cfg;
    AnchorModel anchor;
    Mlp encoder;    // image -> z_low
    Mlp generator;  // (x_t, time embedding, condition) -> velocity

    static Models create(const ModelConfig& cfg, std::uint64_t seed);

    ParamRefs anchor_params();
    ParamRefs encoder_params();
    ParamRefs generator_params();
    ParamRefs all_params();

    void save(const std::string& path);
    void load(const std::string& path);

    Tensor encode(const Image& img) const;  // z_low
};

// Labeled procedural corpus with a deterministic train/holdout split.
struct CorpusItem {
    FaceSpec spec;
    SemanticTokens tokens;
    Image hq;
};

struct Corpus {
    std::vector<CorpusItem> items;
    std::vector<std::size_t> train_idx;
    std::vector<std::size_t> holdout_idx;
    std::size_t image_size = 16;
    int n_levels = 4;
};

Corpus make_corpus(int n_levels, std::size_t image_size, std::size_t holdout_count,
                   std::uint64_t seed);

}  // namespace prefflow
