#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "homlab/annealed.hpp"

using namespace homlab;

namespace {

EnsembleSpec board() {
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Checkerboard;
    s.lambda = 0.25;
    s.lo = 0.25;
    s.hi = 1.0;
    s.p_hi = 0.5;
    return s;
}

EnsembleSpec ones() {
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    return s;
}

// table with cells moment = C * exp(-rate * sqrt(mu) * r) * r^expo, same for
// every q, for exercising the fitting layer without any solves
MomentTable synthetic(double mu, double C, double rate, double expo) {
    MomentTable t;
    t.dim = 2;
    t.mu = mu;
    t.radii = {2, 4, 8, 16};
    t.q_list = {1.0, 2.0};
    t.n_samples = 100;
    const double rmu = std::sqrt(mu);
    for (const int r : t.radii) {
        const double m = C * std::exp(-rate * rmu * r) * std::pow(r, expo);
        t.grad.push_back({MomentCell{m, m, m}, MomentCell{m, m, m}});
        t.mixed.push_back({MomentCell{m, m, m}, MomentCell{m, m, m}});
    }
    return t;
}

} // namespace

TEST_CASE("pure power law is fitted exactly") {
    const MomentTable t = synthetic(1.0, 3.0, 0.0, -2.0);
    const ScalingFit sf = fit_decay_exponent(t, 2.0, ProbeKind::Grad, 0.0);
    CHECK(sf.exponent == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(std::exp(sf.intercept) == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(sf.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(fit_decay_exponent(t, 3.0, ProbeKind::Grad, 0.0), std::invalid_argument);
}

TEST_CASE("exponential factor is removed when the rate is known") {
    const MomentTable t = synthetic(0.09, 1.0, 1.0, -1.0); // rate 1.0 in sqrt(mu) units
    const ScalingFit sf = fit_decay_exponent(t, 1.0, ProbeKind::Mixed, 1.0);
    CHECK(sf.exponent == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(sf.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    // ignoring the rate drags the slope well below the truth
    const ScalingFit bad = fit_decay_exponent(t, 1.0, ProbeKind::Mixed, 0.0);
    CHECK(bad.exponent < -1.1);
}

TEST_CASE("pinned rate fit recovers the planted rate") {
    const MomentTable t = synthetic(1.0, 2.0, 0.4, -2.0);
    CHECK(pinned_rate_fit(t, 2.0, ProbeKind::Grad, -2.0) ==
          doctest::Approx(0.4).epsilon(1e-10));
    // planted growth clamps to zero instead of going negative
    const MomentTable g = synthetic(1.0, 2.0, -0.4, -2.0);
    CHECK(pinned_rate_fit(g, 2.0, ProbeKind::Grad, -2.0) == 0.0);
}

TEST_CASE("joint and pinned handling agree on exact synthetic data") {
    const MomentTable t = synthetic(0.25, 1.5, 0.8, -1.0);
    const ScalingFit pinned = fit_with_rate(t, 2.0, ProbeKind::Grad, RateHandling::Pinned, -1.0);
    const ScalingFit joint = fit_with_rate(t, 2.0, ProbeKind::Grad, RateHandling::Joint, -1.0);
    CHECK(pinned.exponent == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(joint.exponent == doctest::Approx(-1.0).epsilon(1e-7));
    CHECK(pinned.c_hat == doctest::Approx(0.8).epsilon(1e-9));
}

TEST_CASE("dd check passes on planted target exponents") {
    MomentTable t = synthetic(1.0, 1.0, 0.0, -1.0); // grad target for d = 2
    // overwrite mixed cells with the -d law
    for (std::size_t ri = 0; ri < t.radii.size(); ++ri) {
        const double m = std::pow(t.radii[ri], -2.0);
        for (auto& c : t.mixed[ri]) c = MomentCell{m, m, m};
    }
    const DdReport rep = dd_moment_check(t, RateHandling::Zero);
    CHECK(rep.grad_target == doctest::Approx(-1.0));
    CHECK(rep.mixed_target == doctest::Approx(-2.0));
    CHECK(rep.grad_pass);
    CHECK(rep.mixed_pass);
    CHECK(rep.grad_fit.exponent == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(rep.mixed_fit.exponent == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("flatness ratios are one when moments do not depend on q") {
    const MomentTable t = synthetic(1.0, 1.0, 0.2, -1.5);
    const FlatnessReport fl = high_moment_flatness(t, 1.0, 2.0);
    for (const double r : fl.grad_ratio) CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fl.grad_end_over_start == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fl.mixed_end_over_start == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("argument validation") {
    const MomentTable t = synthetic(1.0, 1.0, 0.0, -1.0);
    CHECK_THROWS_AS(weighted_sup_moment(t, -0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(estimate_moments(ones(), 2, 1.0, {5, 4}, {1.0, 2.0}, 50, 1, ProblemSpec{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_moments(ones(), 2, 1.0, {3, 4, 5}, {2.0, 1.0}, 50, 1, ProblemSpec{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_moments(ones(), 2, 1.0, {3, 4, 5}, {1.0, 2.0}, 10, 1, ProblemSpec{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_moments(ones(), 2, -1.0, {3, 4, 5}, {1.0, 2.0}, 50, 1, ProblemSpec{}),
                    std::invalid_argument);
}

TEST_CASE("solver failures abort with the sample index") {
    ProblemSpec bad;
    bad.max_iterations = 1;
    bool threw = false;
    try {
        estimate_moments(ones(), 2, 1.0, {3, 4, 5}, {1.0, 2.0}, 50, 7, bad);
    } catch (const std::runtime_error& ex) {
        threw = true;
        CHECK(std::string(ex.what()).find("sample") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("frozen coefficients give degenerate intervals and q independence") {
    const MomentTable t =
        estimate_moments(ones(), 2, 1.0, {3, 4, 5}, {1.0, 2.0, 4.0}, 50, 11, ProblemSpec{});
    CHECK(t.box_radius >= 15);
    for (std::size_t ri = 0; ri < t.radii.size(); ++ri) {
        for (std::size_t qi = 0; qi < t.q_list.size(); ++qi) {
            const MomentCell& c = t.grad[ri][qi];
            CHECK(c.moment > 0.0);
            CHECK(c.ci_lo == doctest::Approx(c.moment).epsilon(1e-12));
            CHECK(c.ci_hi == doctest::Approx(c.moment).epsilon(1e-12));
            // all draws identical, so every q gives the same value
            CHECK(c.moment == doctest::Approx(t.grad[ri][0].moment).epsilon(1e-12));
        }
        // second gradient decays faster per radius step; its level can sit above
        // the gradient level at mass O(1), so the rates are what to compare
        if (ri > 0)
            CHECK(t.mixed[ri][0].moment / t.mixed[ri - 1][0].moment <
                  t.grad[ri][0].moment / t.grad[ri - 1][0].moment);
    }
    // raw slots are filled per sample and identical across samples
    CHECK(t.grad_raw.size() == 50);
    CHECK(t.grad_raw[0] == t.grad_raw[49]);

    const WeightedSupReport ws = weighted_sup_moment(t, 0.5, 1.0);
    CHECK(ws.grad_full > 0.0);
    CHECK(ws.grad_rel_change >= 0.0);
}

TEST_CASE("runs are reproducible and job count is immaterial") {
    const MomentTable a =
        estimate_moments(board(), 2, 1.0, {3, 4, 5}, {1.0, 2.0}, 50, 21, ProblemSpec{}, 1);
    const MomentTable b =
        estimate_moments(board(), 2, 1.0, {3, 4, 5}, {1.0, 2.0}, 50, 21, ProblemSpec{}, 3);
    REQUIRE(a.radii == b.radii);
    for (std::size_t ri = 0; ri < a.radii.size(); ++ri)
        for (std::size_t qi = 0; qi < a.q_list.size(); ++qi) {
            CHECK(a.grad[ri][qi].moment == b.grad[ri][qi].moment);
            CHECK(a.grad[ri][qi].ci_lo == b.grad[ri][qi].ci_lo);
            CHECK(a.mixed[ri][qi].moment == b.mixed[ri][qi].moment);
        }
    CHECK(a.grad_raw == b.grad_raw);
    CHECK(a.mixed_raw == b.mixed_raw);

    // moments are nondecreasing in q on random data
    for (std::size_t ri = 0; ri < a.radii.size(); ++ri)
        CHECK(a.grad[ri][1].moment >= a.grad[ri][0].moment * (1.0 - 1e-12));

    // a different master seed moves the numbers
    const MomentTable c =
        estimate_moments(board(), 2, 1.0, {3, 4, 5}, {1.0, 2.0}, 50, 22, ProblemSpec{}, 1);
    CHECK(a.grad[0][0].moment != c.grad[0][0].moment);
}
