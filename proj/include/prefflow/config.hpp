#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prefflow/flow.hpp"
#include "prefflow/metrics.hpp"
#include "prefflow/models.hpp"
#include "prefflow/nft.hpp"

namespace prefflow {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Experiment configuration; every field has a default and the textual
// form round-trips through parse -> serialize -> parse.
struct RunConfig {
    // [run]
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    // [corpus]
    int n_levels = 4;
    std::size_t image_size = 16;
    std::size_t holdout = 100;

    // [model]
    ModelConfig model;

    // [degradation] — evaluation-time severity plus bypass probability
    double sigma = 2.0;
    int factor = 2;
    double delta = 5.0;
    int quality = 80;
    double p_rec = 0.1;

    // [stage1]
    Stage1Config stage1;

    // [nft]
    NftConfig nft;

    // [reward]
    RewardSpec reward;

    // [metrics]
    std::size_t feature_dim = 8;
    int variance_runs = 16;
    int variance_conditions = 20;

    void validate() const;
};

// Line-based `key = value` format with `[section]` headers and `#` comments.
// Unknown keys and out-of-range values are rejected with the line number.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string serialize_config(const RunConfig& cfg);

// applies `section.key=value` overrides on top of a parsed config
void apply_override(RunConfig& cfg, const std::string& assignment);

}  // namespace prefflow
