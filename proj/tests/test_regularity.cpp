#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <string>

#include "homlab/regularity.hpp"
#include "support/dense_oracle.hpp"

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

ProblemSpec tight() {
    ProblemSpec s;
    s.tolerance = 1e-12;
    return s;
}

} // namespace

TEST_CASE("difference quotient on homogeneous coefficients matches a dense oracle") {
    const int R = 3;
    Lattice lat = make_lattice(2, 2 * R, Boundary::Dirichlet);
    const CoefficientField A = sample(ones(), lat, 0);
    const double mu = 0.25 / (R * R), p = 3.5;
    const SiteField f = make_rhs(lat, RhsFamily::BumpOrigin, R);
    const Coord x{3, 0, 0};

    const LipschitzRecord rec = lipschitz_quotient(lat, A, mu, f, R, x, p, tight());

    const Eigen::VectorXd u = testsupport::dense_solve(lat, A, mu, f);
    const double xnorm = 3.0;
    double num = 0.0;
    int cnt = 0;
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        if (dist2(lat, c, Coord{}) <= 1.0) {
            Coord shifted = c;
            shifted[0] += x[0];
            shifted[1] += x[1];
            num += std::abs(u[static_cast<Eigen::Index>(lat.site_index(shifted))] -
                            u[static_cast<Eigen::Index>(i)]) /
                   xnorm;
            ++cnt;
        }
    }
    num /= cnt;

    double usq = 0.0, fp = 0.0;
    int bcnt = 0;
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        if (dist2(lat, c, Coord{}) <= 4.0 * R * R) {
            const double uv = u[static_cast<Eigen::Index>(i)];
            usq += uv * uv;
            fp += std::pow(std::abs(R * R * f[static_cast<std::size_t>(i)]), p);
            ++bcnt;
        }
    }
    const double den = std::sqrt(usq / bcnt) / R + std::pow(fp / bcnt, 1.0 / p) / R;

    CHECK(rec.numerator == doctest::Approx(num).epsilon(1e-8));
    CHECK(rec.denominator == doctest::Approx(den).epsilon(1e-10));
    CHECK(rec.quotient == doctest::Approx(num / den).epsilon(1e-8));
}

TEST_CASE("quotient is invariant under scaling and sign flips of the data") {
    const int R = 4;
    Lattice lat = make_lattice(2, 2 * R, Boundary::Dirichlet);
    const CoefficientField A = sample(board(), lat, 12);
    const double mu = 0.25 / (R * R), p = 3.0;
    SiteField f = make_rhs(lat, RhsFamily::BumpOrigin, R);
    const Coord x{3, 1, 0};

    const LipschitzRecord base = lipschitz_quotient(lat, A, mu, f, R, x, p, tight());
    CHECK(base.quotient > 0.0);

    SiteField scaled = f;
    for (auto& v : scaled) v *= 17.0;
    const LipschitzRecord sc = lipschitz_quotient(lat, A, mu, scaled, R, x, p, tight());
    CHECK(sc.quotient == doctest::Approx(base.quotient).epsilon(1e-9));
    CHECK(sc.numerator == doctest::Approx(17.0 * base.numerator).epsilon(1e-9));

    SiteField flipped = f;
    for (auto& v : flipped) v = -v;
    const LipschitzRecord fl = lipschitz_quotient(lat, A, mu, flipped, R, x, p, tight());
    CHECK(fl.quotient == doctest::Approx(base.quotient).epsilon(1e-12));
}

TEST_CASE("quotient preconditions") {
    const int R = 4;
    Lattice lat = make_lattice(2, 2 * R, Boundary::Dirichlet);
    const CoefficientField A = sample(ones(), lat, 0);
    const SiteField f = make_rhs(lat, RhsFamily::BumpOrigin, R);
    const double mu = 0.25 / (R * R);

    // probe too close, too far, exponent too small, box too small
    CHECK_THROWS_AS(lipschitz_quotient(lat, A, mu, f, R, Coord{2, 0, 0}, 3.0, tight()),
                    std::invalid_argument);
    CHECK_NOTHROW(lipschitz_quotient(lat, A, mu, f, R, Coord{2, 1, 0}, 3.0, tight()));
    CHECK_THROWS_AS(lipschitz_quotient(lat, A, mu, f, R, Coord{5, 0, 0}, 3.0, tight()),
                    std::invalid_argument);
    CHECK_THROWS_AS(lipschitz_quotient(lat, A, mu, f, R, Coord{3, 0, 0}, 2.0, tight()),
                    std::invalid_argument);
    Lattice small = make_lattice(2, 2 * R - 1, Boundary::Dirichlet);
    const CoefficientField As = sample(ones(), small, 0);
    const SiteField fs = make_rhs(small, RhsFamily::BumpOrigin, R);
    CHECK_THROWS_AS(lipschitz_quotient(small, As, mu, fs, R, Coord{3, 0, 0}, 3.0, tight()),
                    std::invalid_argument);
}

TEST_CASE("source family shapes") {
    const int R = 8;
    Lattice lat = make_lattice(2, 2 * R, Boundary::Dirichlet);
    const SiteField origin = make_rhs(lat, RhsFamily::BumpOrigin, R);
    const SiteField near = make_rhs(lat, RhsFamily::BumpNearProbe, R);
    const SiteField osc = make_rhs(lat, RhsFamily::Oscillatory, R);
    const auto at = [&](const SiteField& g, int a, int b) {
        return g[static_cast<std::size_t>(lat.site_index(Coord{a, b, 0}))];
    };
    CHECK(at(origin, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(at(origin, 0, 0) > at(origin, 3, 0));
    // the near-probe bump peaks at R/2 along the first axis
    CHECK(at(near, R / 2, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(at(near, R / 2, 0) > at(near, 0, 0));
    // the oscillatory source changes sign with period 8 in x_1
    CHECK(at(osc, 0, 0) > 0.0);
    CHECK(at(osc, 4, 0) < 0.0);
}

TEST_CASE("moment scan validates its grid and returns structured rows") {
    CHECK_THROWS_AS(moment_boundedness_scan(board(), 2, {6, 4}, 2.0, 3.0, 20, 1, ProblemSpec{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(moment_boundedness_scan(board(), 2, {4, 6}, 0.5, 3.0, 20, 1, ProblemSpec{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(moment_boundedness_scan(board(), 2, {4, 6}, 2.0, 2.0, 20, 1, ProblemSpec{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(moment_boundedness_scan(board(), 2, {4, 6}, 2.0, 3.0, 5, 1, ProblemSpec{}),
                    std::invalid_argument);

    ProblemSpec spec;
    spec.tolerance = 1e-8;
    const LipschitzScanReport rep =
        moment_boundedness_scan(board(), 2, {4, 6}, 2.0, 3.0, 20, 17, spec, 2);
    CHECK(rep.R_list == std::vector<int>{4, 6});
    REQUIRE(rep.rows.size() == 6);
    for (const LipschitzScanRow& r : rep.rows) {
        CHECK(r.moment > 0.0);
        CHECK(r.ci.lo <= r.moment + 1e-12);
        CHECK(r.ci.hi >= r.moment - 1e-12);
    }
    CHECK(rep.rows[0].R == 4);
    CHECK(rep.rows[0].probe_class == 0);
    CHECK(rep.rows[0].probe[0] == 3); // max(3, R/4)
    CHECK(rep.rows[1].probe[0] == 4); // max(4, R/2)
    CHECK(rep.rows[2].probe[0] == 4); // R itself
    REQUIRE(rep.end_over_start.size() == 3);
    for (const double v : rep.end_over_start) CHECK(v > 0.0);
    CHECK(rep.max_spread >= 1.0);

    // deterministic across job counts
    const LipschitzScanReport rep1 =
        moment_boundedness_scan(board(), 2, {4, 6}, 2.0, 3.0, 20, 17, spec, 1);
    for (std::size_t i = 0; i < rep.rows.size(); ++i)
        CHECK(rep.rows[i].moment == rep1.rows[i].moment);
}

TEST_CASE("local boundedness constants are positive and stable in shape") {
    bool threw = false;
    try {
        local_boundedness_check(board(), 2, 4, 1.0, 4, 3, BoundednessMode::RingSource,
                                ProblemSpec{});
    } catch (const std::invalid_argument& ex) {
        threw = true;
        CHECK(std::string(ex.what()).find("q > d/2") != std::string::npos);
    }
    CHECK(threw);

    ProblemSpec spec;
    spec.tolerance = 1e-8;
    for (const BoundednessMode mode : {BoundednessMode::RingSource, BoundednessMode::BumpSource}) {
        const BoundednessReport rep = local_boundedness_check(board(), 2, 4, 2.0, 4, 33, mode,
                                                              spec);
        CHECK(rep.constants.size() == 4);
        for (const double c : rep.constants) CHECK(c > 0.0);
        CHECK(rep.stability >= 1.0);
        CHECK(rep.min_c > 0.0);
        CHECK(rep.max_c == doctest::Approx(rep.stability * rep.min_c).epsilon(1e-12));
    }
}
