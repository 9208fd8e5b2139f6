#include "prefflow/posterior.hpp"

#include <cmath>
#include <limits>

namespace prefflow {

void DiscreteJoint::validate() const {
    if (nx == 0 || ny == 0 || ns == 0) throw ContractError("DiscreteJoint: empty support");
    if (p.size() != nx * ny * ns) throw ContractError("DiscreteJoint: table size mismatch");
    double total = 0.0;
    for (double v : p) {
        if (v < 0.0) throw ContractError("DiscreteJoint: negative probability");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ContractError("DiscreteJoint: not normalized");
}

DiscreteJoint DiscreteJoint::random(std::size_t nx, std::size_t ny, std::size_t ns, Rng& rng) {
    DiscreteJoint j;
    j.nx = nx;
    j.ny = ny;
    j.ns = ns;
    j.p.resize(nx * ny * ns);
    double total = 0.0;
    for (double& v : j.p) {
        v = -std::log(1.0 - rng.uniform());  // exponential weights
        total += v;
    }
    for (double& v : j.p) v /= total;
    // renormalize exactly once more to push the sum within tolerance
    double check = 0.0;
    for (double v : j.p) check += v;
    for (double& v : j.p) v /= check;
    return j;
}

RectifiedPosterior rectified_posterior(const std::vector<double>& p,
                                       const std::vector<double>& reward, double lambda) {
    if (p.empty() || p.size() != reward.size())
        throw ContractError("rectified_posterior: size mismatch");
    for (double r : reward)
        if (!std::isfinite(r)) throw ContractError("rectified_posterior: non-finite reward");
    RectifiedPosterior out;
    out.q.resize(p.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        out.q[i] = p[i] * std::exp(lambda * reward[i]);
        z += out.q[i];
    }
    if (z <= 0.0) throw NumericError("rectified_posterior: zero renormalizer");
    for (double& v : out.q) v /= z;

    for (std::size_t i = 1; i < out.q.size(); ++i)
        if (out.q[i] > out.q[out.argmax_q]) out.argmax_q = i;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double score = (p[i] > 0.0 ? std::log(p[i]) : -std::numeric_limits<double>::infinity()) +
                             lambda * reward[i];
        if (score > best) {
            best = score;
            out.argmax_score = i;
        }
    }
    return out;
}

double conditional_entropy(const DiscreteJoint& joint, GivenSet given) {
    joint.validate();
    double h = 0.0;
    if (given == GivenSet::YS) {
        // H(X|Y,S) = -sum p(x,y,s) log p(x|y,s)
        for (std::size_t y = 0; y < joint.ny; ++y)
            for (std::size_t s = 0; s < joint.ns; ++s) {
                double pys = 0.0;
                for (std::size_t x = 0; x < joint.nx; ++x) pys += joint.at(x, y, s);
                if (pys <= 0.0) continue;
                for (std::size_t x = 0; x < joint.nx; ++x) {
                    const double pxys = joint.at(x, y, s);
                    if (pxys > 0.0) h -= pxys * std::log(pxys / pys);
                }
            }
    } else {
        // H(X|Y) = -sum p(x,y) log p(x|y)
        for (std::size_t y = 0; y < joint.ny; ++y) {
            double py = 0.0;
            for (std::size_t x = 0; x < joint.nx; ++x)
                for (std::size_t s = 0; s < joint.ns; ++s) py += joint.at(x, y, s);
            if (py <= 0.0) continue;
            for (std::size_t x = 0; x < joint.nx; ++x) {
                double pxy = 0.0;
                for (std::size_t s = 0; s < joint.ns; ++s) pxy += joint.at(x, y, s);
                if (pxy > 0.0) h -= pxy * std::log(pxy / py);
            }
        }
    }
    return h;
}

}  // namespace prefflow
