#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "prefflow/image.hpp"
#include "prefflow/nn.hpp"
#include "prefflow/toyfaces.hpp"

namespace prefflow {

// Condition for the generator: pooled semantic-token embedding (or the
// learned null vector) plus the low-level latent of the degraded image.
struct Condition {
    Tensor anchor_emb;
    Tensor z_low;
    bool is_null = false;

    Tensor vec() const;  // concatenation [anchor_emb; z_low]
};

// Next-token predictor over the attribute vocabulary. Per-position
// feed-forward heads consume (visual features, pooled prefix embedding,
// instruction embedding).
struct AnchorModel {
    int n_levels = 4;
    std::size_t image_dim = 0;
    std::size_t feat_dim = 16;
    std::size_t embed_dim = 8;

    Mlp projector;           // image -> visual features
    Tensor embed;            // (V, embed_dim) token embedding table
    Tensor null_embed;       // learned null-instruction sentinel
    std::vector<Mlp> heads;  // one per position, output width V

    std::size_t vocab() const { return vocab_size(n_levels); }
    std::size_t positions() const { return kNumAttributes; }

    static AnchorModel create(int n_levels, std::size_t image_dim, std::size_t feat_dim,
                              std::size_t embed_dim, std::size_t hidden, Rng& rng);

    void collect_params(ParamRefs& refs);
};

struct AnchorVars {
    MlpVars projector;
    ad::VarPtr embed;
    ad::VarPtr null_embed;
    std::vector<MlpVars> heads;
};

AnchorVars lift(const AnchorModel& model, bool trainable);
void collect_grads(const AnchorVars& vars, GradRefs& grads);

// Logits for the next position given a (possibly empty) prefix.
// instruction == nullptr selects the null sentinel embedding.
ad::VarPtr ntp_logits_graph(const AnchorModel& model, const AnchorVars& vars,
                            const Image& degraded, const std::vector<int>& prefix,
                            const SemanticTokens* instruction);
Tensor ntp_logits(const AnchorModel& model, const Image& degraded,
                  const std::vector<int>& prefix, const SemanticTokens* instruction);

struct AnchorSample {
    const Image* degraded;
    const SemanticTokens* targets;
    const SemanticTokens* instruction;  // nullptr for the null instruction
};

// Mean token-level cross entropy over a teacher-forced batch.
ad::VarPtr ce_loss_graph(const AnchorModel& model, const AnchorVars& vars,
                         const std::vector<AnchorSample>& batch);
double ce_loss(const AnchorModel& model, const std::vector<AnchorSample>& batch);

// Greedy argmax decoding restricted to each position's attribute id range,
// ties broken by lowest token id.
SemanticTokens generate_tokens(const AnchorModel& model, const Image& degraded,
                               const SemanticTokens* instruction);

bool drop_instruction(Rng& rng, double p_txt);

Condition embed_condition(const AnchorModel& model, const SemanticTokens* tokens,
                          const Tensor& z_low);

}  // namespace prefflow
