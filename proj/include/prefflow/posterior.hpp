#pragma once

#include <vector>

#include "prefflow/rng.hpp"
#include "prefflow/tensor.hpp"

namespace prefflow {

// Finite joint distribution over (X, Y, S).
struct DiscreteJoint {
    std::size_t nx = 0, ny = 0, ns = 0;
    std::vector<double> p;  // p[x*ny*ns + y*ns + s]

    double& at(std::size_t x, std::size_t y, std::size_t s) { return p[(x * ny + y) * ns + s]; }
    double at(std::size_t x, std::size_t y, std::size_t s) const { return p[(x * ny + y) * ns + s]; }

    void validate() const;  // nonnegative, sums to 1 within 1e-12
    static DiscreteJoint random(std::size_t nx, std::size_t ny, std::size_t ns, Rng& rng);
};

struct RectifiedPosterior {
    std::vector<double> q;       // normalized p(x) exp(lambda R(x))
    std::size_t argmax_q = 0;
    std::size_t argmax_score = 0;  // argmax of log p + lambda R
};

// q(x) = p(x) exp(lambda R(x)) / sum; also checks argmax equivalence with
// log p + lambda R.
RectifiedPosterior rectified_posterior(const std::vector<double>& p,
                                       const std::vector<double>& reward, double lambda);

enum class GivenSet { Y, YS };

// Conditional Shannon entropy in nats: H(X|Y) or H(X|Y,S).
double conditional_entropy(const DiscreteJoint& joint, GivenSet given);

}  // namespace prefflow
