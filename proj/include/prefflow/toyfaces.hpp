#pragma once

#include <cstdint>
#include <vector>

#include "prefflow/image.hpp"

namespace prefflow {

// Discrete attribute vector driving the procedural face renderer.
// Attributes, in order: eye spacing, mouth curvature, brightness, face width.
struct FaceSpec {
    std::vector<int> levels;  // each in [0, n_levels)
    int n_levels = 4;

    void validate() const;
};

struct SemanticTokens {
    std::vector<int> ids;  // one token per attribute, disjoint id ranges
};

constexpr std::size_t kNumAttributes = 4;

inline std::size_t vocab_size(int n_levels) { return kNumAttributes * static_cast<std::size_t>(n_levels); }

Image render(const FaceSpec& spec, std::size_t size);

// Bijective attribute-level <-> token encoding: attribute i at level v maps
// to id i*n_levels + v.
SemanticTokens spec_to_tokens(const FaceSpec& spec);
FaceSpec tokens_to_spec(const SemanticTokens& tokens, int n_levels);

// All n_levels^kNumAttributes specs in lexicographic order.
std::vector<FaceSpec> enumerate_specs(int n_levels);

}  // namespace prefflow
