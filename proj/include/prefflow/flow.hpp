#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prefflow/anchor.hpp"
#include "prefflow/degradation.hpp"
#include "prefflow/models.hpp"
#include "prefflow/nn.hpp"
#include "prefflow/rng.hpp"

namespace prefflow {

// Linear interpolation path between noise (t=0) and data (t=1).
struct FlowPath {
    Tensor x0;   // noise endpoint
    Tensor x1;   // data endpoint
    double t = 0.0;
    Tensor x_t;  // (1-t) x0 + t x1
    Tensor u_t;  // x1 - x0
};

FlowPath fm_pair(const Tensor& x1, double t, Rng& rng);

Tensor time_embedding(double t);  // (t, sin 2*pi*t, cos 2*pi*t)

// v_theta(x_t, t, cond); plain evaluation path used by the sampler
Tensor velocity_eval(const Mlp& net, const Tensor& x_t, double t, const Tensor& cond);
ad::VarPtr velocity_graph(const MlpVars& net, const Tensor& x_t, double t,
                          const ad::VarPtr& cond);

struct FlowSample {
    Tensor x1;
    Condition cond;
};

// Mean over the batch of ||v_theta(x_t,t,c) - u_t||^2 with t ~ U(0,1).
double fm_loss(const Mlp& net, const std::vector<FlowSample>& batch, Rng& rng);
ad::VarPtr fm_loss_graph(const MlpVars& net, const std::vector<FlowSample>& batch, Rng& rng);

// ||E(y) - E(x)||^2
double latent_consistency_loss(const Mlp& encoder, const Image& y, const Image& x);
ad::VarPtr latent_consistency_loss_graph(const MlpVars& encoder, const Image& y, const Image& x);

// L_CE + alpha * L_diff with the generator frozen; gradients still flow
// through the frozen generator into the anchor-side condition.
struct AlignSample {
    const Image* degraded;
    const SemanticTokens* targets;
    const SemanticTokens* instruction;  // nullptr for null instruction
    Tensor x1;
    Tensor z_low;
};
ad::VarPtr align_loss_graph(const AnchorModel& anchor, const AnchorVars& anchor_vars,
                            const MlpVars& gen_frozen, const std::vector<AlignSample>& batch,
                            double alpha, Rng& rng);
double align_loss(const AnchorModel& anchor, const Mlp& generator,
                  const std::vector<AlignSample>& batch, double alpha, Rng& rng);

// x <- x0 ~ N(0,I); steps explicit Euler updates along v_theta; returns x(1).
Tensor euler_sample(const Mlp& net, const Condition& cond, int steps, std::uint64_t seed,
                    std::size_t data_dim);

struct Stage1Config {
    double alpha = 1.0;  // CE / diffusion balance in stage 1.1
    double beta = 1.0;   // latent-consistency weight in stage 1.2
    double lr11 = 3e-3;
    double lr12 = 3e-3;
    int steps11 = 600;
    int steps12 = 4000;
    int batch = 16;
    double weight_decay = 0.0;
    double p_txt = 0.95;
    double p_rec = 0.1;
    // training-time degradation severity (kept mild)
    double sigma_max = 2.0;
    int r_max = 2;
    double delta_max = 5.0;
    int q_min = 80;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Stage1Row {
    int step;
    double l_ce, l_diff, l_mse, l_total;
};

struct Stage1Result {
    std::vector<Stage1Row> log;
    double initial_flow_loss = 0.0;  // first stage-1.2 batch loss
    double final_flow_loss = 0.0;    // last stage-1.2 batch loss
};

// Draws a training degradation within the configured mild ranges; the
// sampled factor is snapped to a divisor of the image size.
DegradationParams sample_training_degradation(Rng& rng, const Stage1Config& cfg,
                                              std::size_t image_size);

Stage1Result stage1_train(Models& models, const Corpus& corpus, const Stage1Config& cfg);

void write_stage1_csv(const std::string& path, const std::vector<Stage1Row>& log);

}  // namespace prefflow
