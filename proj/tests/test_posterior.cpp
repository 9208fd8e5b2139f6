#include <doctest.h>

#include <cmath>

#include "prefflow/posterior.hpp"

using namespace prefflow;

namespace {

// brute-force H(X|Y) / H(X|Y,S) straight from the definition, cell by cell
double brute_h_given_y(const DiscreteJoint& j) {
    double h = 0.0;
    for (std::size_t x = 0; x < j.nx; ++x)
        for (std::size_t y = 0; y < j.ny; ++y) {
            double pxy = 0.0, py = 0.0;
            for (std::size_t s = 0; s < j.ns; ++s) pxy += j.at(x, y, s);
            for (std::size_t x2 = 0; x2 < j.nx; ++x2)
                for (std::size_t s = 0; s < j.ns; ++s) py += j.at(x2, y, s);
            if (pxy > 0.0) h -= pxy * std::log(pxy / py);
        }
    return h;
}

double brute_h_given_ys(const DiscreteJoint& j) {
    double h = 0.0;
    for (std::size_t x = 0; x < j.nx; ++x)
        for (std::size_t y = 0; y < j.ny; ++y)
            for (std::size_t s = 0; s < j.ns; ++s) {
                double pys = 0.0;
                for (std::size_t x2 = 0; x2 < j.nx; ++x2) pys += j.at(x2, y, s);
                const double p = j.at(x, y, s);
                if (p > 0.0) h -= p * std::log(p / pys);
            }
    return h;
}

}  // namespace

TEST_CASE("tilting with zero strength or constant scores is the identity") {
    const std::vector<double> p{0.1, 0.2, 0.3, 0.4};
    const RectifiedPosterior q0 = rectified_posterior(p, {5.0, -1.0, 0.0, 2.0}, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(q0.q[i] == doctest::Approx(p[i]).epsilon(1e-14));

    const RectifiedPosterior qc = rectified_posterior(p, {3.0, 3.0, 3.0, 3.0}, 2.0);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(qc.q[i] == doctest::Approx(p[i]).epsilon(1e-14));
}

TEST_CASE("hand case: even prior tilted by ln 3 gives a three-to-one posterior") {
    const RectifiedPosterior post =
        rectified_posterior({0.5, 0.5}, {0.0, 1.0}, std::log(3.0));
    CHECK(post.q[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(post.q[1] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(post.argmax_q == 1);
    CHECK(post.argmax_score == 1);
}

TEST_CASE("tilted distribution is always normalized and argmaxes agree") {
    Rng rng(1);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = static_cast<std::size_t>(rng.uniform_int(2, 8));
        std::vector<double> p(n), r(n);
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = -std::log(1.0 - rng.uniform());
            z += p[i];
            r[i] = rng.normal();
        }
        for (double& v : p) v /= z;
        const double lambda = rng.uniform(0.0, 3.0);
        const RectifiedPosterior post = rectified_posterior(p, r, lambda);
        double sum = 0.0;
        for (double v : post.q) sum += v;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        CHECK(post.argmax_q == post.argmax_score);
    }
}

TEST_CASE("stronger tilting concentrates mass on the best-scored point") {
    const std::vector<double> p{0.6, 0.3, 0.1};
    const std::vector<double> r{0.0, 0.5, 1.0};
    double prev = 0.0;
    for (double lambda : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const RectifiedPosterior post = rectified_posterior(p, r, lambda);
        CHECK(post.q[2] >= prev);
        prev = post.q[2];
    }
}

TEST_CASE("degenerate tilts are reported as numeric failures") {
    CHECK_THROWS_AS(rectified_posterior({0.0, 0.0}, {0.0, 0.0}, 1.0), NumericError);
    CHECK_THROWS_AS(rectified_posterior({0.5}, {0.0, 1.0}, 1.0), ContractError);
}

TEST_CASE("joint tables validate their invariants") {
    DiscreteJoint j;
    j.nx = 2;
    j.ny = 1;
    j.ns = 1;
    j.p = {0.5, 0.6};
    CHECK_THROWS_AS(j.validate(), ContractError);
    j.p = {0.5, 0.5};
    j.validate();
    j.p = {0.5, -0.5};
    CHECK_THROWS_AS(j.validate(), ContractError);
}

TEST_CASE("independent side information leaves the entropy unchanged") {
    // X uniform over 4, independent of (Y, S): H(X|Y) = H(X|Y,S) = ln 4
    DiscreteJoint j;
    j.nx = 4;
    j.ny = 2;
    j.ns = 2;
    j.p.assign(16, 1.0 / 16.0);
    CHECK(conditional_entropy(j, GivenSet::Y) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(conditional_entropy(j, GivenSet::YS) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("perfectly informative side information removes all uncertainty") {
    // S = X deterministically: p(x,y,s) > 0 only when s == x
    DiscreteJoint j;
    j.nx = 2;
    j.ny = 2;
    j.ns = 2;
    j.p.assign(8, 0.0);
    // at(x, y, s) layout: validate via the accessor by assigning all mass
    for (std::size_t x = 0; x < 2; ++x)
        for (std::size_t y = 0; y < 2; ++y) j.at(x, y, x) = 0.25;
    j.validate();
    CHECK(conditional_entropy(j, GivenSet::YS) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(conditional_entropy(j, GivenSet::Y) > 0.5);
}

TEST_CASE("hand-built partially dependent joint matches the brute-force sum") {
    DiscreteJoint j;
    j.nx = 2;
    j.ny = 2;
    j.ns = 2;
    j.p = {0.20, 0.05, 0.10, 0.15, 0.05, 0.20, 0.15, 0.10};
    j.validate();
    CHECK(conditional_entropy(j, GivenSet::Y) ==
          doctest::Approx(brute_h_given_y(j)).epsilon(1e-12));
    CHECK(conditional_entropy(j, GivenSet::YS) ==
          doctest::Approx(brute_h_given_ys(j)).epsilon(1e-12));
}

TEST_CASE("conditioning on more never increases entropy, over many random joints") {
    Rng rng(2);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t nx = static_cast<std::size_t>(rng.uniform_int(2, 4));
        const std::size_t ny = static_cast<std::size_t>(rng.uniform_int(2, 4));
        const std::size_t ns = static_cast<std::size_t>(rng.uniform_int(2, 4));
        const DiscreteJoint j = DiscreteJoint::random(nx, ny, ns, rng);
        const double hy = conditional_entropy(j, GivenSet::Y);
        const double hys = conditional_entropy(j, GivenSet::YS);
        CHECK(hys <= hy + 1e-12);
        CHECK(hys >= 0.0);
    }
}
