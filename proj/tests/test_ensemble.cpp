#include "doctest.h"

#include <cmath>

#include "homlab/ensemble.hpp"
#include "homlab/rng.hpp"
#include "homlab/stats.hpp"

using namespace homlab;

namespace {

EnsembleSpec checkerboard(double lambda, double lo, double hi, double p_hi) {
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Checkerboard;
    s.lambda = lambda;
    s.lo = lo;
    s.hi = hi;
    s.p_hi = p_hi;
    return s;
}

} // namespace

TEST_CASE("constant ensemble is identically one") {
    Lattice lat = make_lattice(2, 3, Boundary::Dirichlet);
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    CoefficientField A = sample(s, lat, 7);
    for (double v : A.a) CHECK(v == 1.0);
    CHECK(covered_fraction(s, A) == 0.0);
}

TEST_CASE("degenerate checkerboard is constant") {
    Lattice lat = make_lattice(2, 3, Boundary::Periodic);
    CoefficientField A = sample(checkerboard(1.0, 1.0, 1.0, 0.5), lat, 42);
    for (double v : A.a) CHECK(v == 1.0);
}

TEST_CASE("checkerboard site mean within three sigma") {
    // radius 50: 101^2 = 10201 iid sites; mean 0.55, sd 0.45/sqrt(10201)
    Lattice lat = make_lattice(2, 50, Boundary::Periodic);
    CoefficientField A = sample(checkerboard(0.1, 0.1, 1.0, 0.5), lat, 2024);
    const double m = mean(A.site_values);
    CHECK(std::abs(m - 0.55) < 3.0 * 0.45 / std::sqrt(10201.0));
}

TEST_CASE("sampling is bit-identical per seed and differs across seeds") {
    Lattice lat = make_lattice(3, 3, Boundary::Dirichlet);
    EnsembleSpec s = checkerboard(0.25, 0.25, 1.0, 0.5);
    CoefficientField a1 = sample(s, lat, 99);
    CoefficientField a2 = sample(s, lat, 99);
    CoefficientField a3 = sample(s, lat, 100);
    CHECK(a1.a == a2.a);
    CHECK(a1.a != a3.a);

    EnsembleSpec p;
    p.kind = EnsembleSpec::Kind::PoissonInclusions;
    p.lambda = 0.25;
    p.intensity = 0.8;
    p.inclusion_radius = 1.1;
    p.background = 1.0;
    p.inclusion_value = 0.25;
    CoefficientField b1 = sample(p, lat, 5);
    CoefficientField b2 = sample(p, lat, 5);
    CHECK(b1.a == b2.a);
}

TEST_CASE("edges stay inside [lambda, 1]") {
    Lattice lat = make_lattice(2, 8, Boundary::Dirichlet);
    EnsembleSpec s = checkerboard(0.25, 0.3, 0.9, 0.4);
    CoefficientField A = sample(s, lat, 11);
    for (double v : A.a) {
        CHECK(v >= s.lambda);
        CHECK(v <= 1.0);
    }
    EnsembleSpec p;
    p.kind = EnsembleSpec::Kind::PoissonInclusions;
    p.lambda = 0.5;
    p.intensity = 1.0;
    p.inclusion_radius = 0.9;
    p.background = 0.5;
    p.inclusion_value = 1.0;
    CoefficientField B = sample(p, lat, 12);
    for (double v : B.a) {
        CHECK(v >= p.lambda);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("poisson covered fraction matches the void formula") {
    // P(edge at inclusion value) = 1 - exp(-intensity * pi * r^2) for a
    // homogeneous process probed at one location (the edge midpoint).
    // Periodic box so there is no boundary deficit.
    EnsembleSpec p;
    p.kind = EnsembleSpec::Kind::PoissonInclusions;
    p.lambda = 0.25;
    p.intensity = 0.5;
    p.inclusion_radius = 1.0;
    p.background = 0.5;
    p.inclusion_value = 1.0;
    Lattice lat = make_lattice(2, 80, Boundary::Periodic);
    const double expect = 1.0 - std::exp(-p.intensity * M_PI);
    double acc = 0.0;
    for (std::uint64_t seed : {1ull, 2ull}) {
        CoefficientField A = sample(p, lat, seed);
        acc += covered_fraction(p, A);
    }
    // coverage indicators are correlated within ~2r; 0.03 is a 3-sigma band
    // for the cluster-adjusted effective sample size of two fields
    CHECK(std::abs(acc / 2.0 - expect) < 0.03);
}

TEST_CASE("void formula also holds in d=3") {
    EnsembleSpec p;
    p.kind = EnsembleSpec::Kind::PoissonInclusions;
    p.lambda = 0.25;
    p.intensity = 0.3;
    p.inclusion_radius = 1.0;
    p.background = 1.0;
    p.inclusion_value = 0.25;
    Lattice lat = make_lattice(3, 14, Boundary::Periodic);
    const double expect = 1.0 - std::exp(-p.intensity * 4.0 * M_PI / 3.0);
    CoefficientField A = sample(p, lat, 9);
    CHECK(std::abs(covered_fraction(p, A) - expect) < 0.04);
}

TEST_CASE("spec validation names the offending field") {
    Lattice lat = make_lattice(2, 2, Boundary::Dirichlet);
    EnsembleSpec bad = checkerboard(0.5, 0.25, 1.0, 0.5); // lo below lambda
    CHECK_THROWS_WITH_AS(sample(bad, lat, 1), doctest::Contains("lo"), std::invalid_argument);
    EnsembleSpec badp = checkerboard(0.25, 0.25, 1.0, 1.5);
    CHECK_THROWS_WITH_AS(sample(badp, lat, 1), doctest::Contains("p_hi"), std::invalid_argument);
    EnsembleSpec pois;
    pois.kind = EnsembleSpec::Kind::PoissonInclusions;
    pois.lambda = 0.25;
    pois.intensity = -1.0;
    CHECK_THROWS_WITH_AS(sample(pois, lat, 1), doctest::Contains("intensity"),
                         std::invalid_argument);
}

TEST_CASE("single-edge marginal is translation invariant (chi-square proxy)") {
    // 100 fields; the axis-0 edge value at 10 scattered translates; a 2-bin
    // homogeneity test on the 10x2 counts must not reject at the 1% level.
    Lattice lat = make_lattice(2, 10, Boundary::Periodic);
    EnsembleSpec s = checkerboard(0.25, 0.25, 1.0, 0.5);
    const Coord translates[10] = {{0, 0, 0},  {3, 1, 0},  {-4, 2, 0}, {7, -6, 0}, {-8, -3, 0},
                                  {5, 9, 0},  {-2, 7, 0}, {9, -9, 0}, {1, -5, 0}, {-7, 4, 0}};
    std::vector<std::vector<std::int64_t>> counts(10, std::vector<std::int64_t>(2, 0));
    for (int rep = 0; rep < 100; ++rep) {
        CoefficientField A = sample(s, lat, child_seed(31337, static_cast<std::uint64_t>(rep)));
        for (int t = 0; t < 10; ++t) {
            const double v = A.a[lat.site_index(translates[t]) * 2 + 0];
            counts[t][v == s.hi ? 1 : 0] += 1;
        }
    }
    const double stat = chi2_homogeneity(counts);
    CHECK(chi2_sf(stat, 9) > 0.01);
}
