#include "doctest.h"

#include <cmath>

#include "homlab/ensemble.hpp"
#include "homlab/rng.hpp"
#include "homlab/solver.hpp"
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

SiteField random_field(const Lattice& lat, Rng& rng) {
    SiteField u(static_cast<std::size_t>(lat.nsites));
    for (auto& v : u) v = rng.uniform(-1.0, 1.0);
    return u;
}

} // namespace

TEST_CASE("five point stencil on a delta") {
    Lattice lat = make_lattice(2, 1, Boundary::Dirichlet);
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    CoefficientField A = sample(s, lat, 0);
    const double mu = 0.3;
    LinearOperator op(lat, A, mu);
    SiteField u(static_cast<std::size_t>(lat.nsites), 0.0);
    u[lat.site_index(Coord{0, 0, 0})] = 1.0;
    SiteField out = op.apply(u);
    CHECK(out[lat.site_index(Coord{0, 0, 0})] == doctest::Approx(mu + 4.0).epsilon(1e-15));
    CHECK(out[lat.site_index(Coord{1, 0, 0})] == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("apply matches the dense assembly") {
    Rng rng(77);
    for (int dim : {2, 3}) {
        for (Boundary b : {Boundary::Dirichlet, Boundary::Periodic}) {
            Lattice lat = make_lattice(dim, dim == 2 ? 4 : 2, b);
            CoefficientField A = sample(board(), lat, 1000 + dim);
            LinearOperator op(lat, A, 0.7);
            Eigen::MatrixXd M = testsupport::dense_operator(lat, A, 0.7);
            for (int trial = 0; trial < 5; ++trial) {
                SiteField u = random_field(lat, rng);
                SiteField got = op.apply(u);
                Eigen::VectorXd uv(static_cast<Eigen::Index>(u.size()));
                for (std::size_t i = 0; i < u.size(); ++i) uv[static_cast<Eigen::Index>(i)] = u[i];
                Eigen::VectorXd want = M * uv;
                for (std::size_t i = 0; i < u.size(); ++i)
                    CHECK(std::abs(got[i] - want[static_cast<Eigen::Index>(i)]) <= 1e-13);
            }
        }
    }
}

TEST_CASE("solve matches the dense factorization oracle") {
    Rng rng(5150);
    for (Boundary b : {Boundary::Dirichlet, Boundary::Periodic}) {
        Lattice lat = make_lattice(2, 5, b);
        CoefficientField A = sample(board(), lat, 321);
        SiteField f = random_field(lat, rng);
        ProblemSpec spec;
        spec.mu = 0.4;
        SolveInfo info;
        LinearOperator op(lat, A, spec.mu);
        SiteField u = solve(op, f, spec, &info);
        Eigen::VectorXd want = testsupport::dense_solve(lat, A, spec.mu, f);
        for (std::size_t i = 0; i < u.size(); ++i)
            CHECK(std::abs(u[i] - want[static_cast<Eigen::Index>(i)]) <= 1e-9);
        CHECK(info.rel_residual <= spec.tolerance);
        CHECK(info.iterations > 0);
    }
}

TEST_CASE("plane waves are eigenfunctions on the periodic constant lattice") {
    const int radius = 5, n = 2 * radius + 1;
    Lattice lat = make_lattice(2, radius, Boundary::Periodic);
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    CoefficientField A = sample(s, lat, 0);
    const double mu = 0.9;
    const int kappa[2] = {2, 1};
    const double eig = mu + 2.0 * (1.0 - std::cos(2.0 * M_PI * kappa[0] / n)) +
                       2.0 * (1.0 - std::cos(2.0 * M_PI * kappa[1] / n));
    SiteField f(static_cast<std::size_t>(lat.nsites));
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        f[i] = std::cos(2.0 * M_PI * (kappa[0] * c[0] + kappa[1] * c[1]) / n);
    }
    ProblemSpec spec;
    spec.mu = mu;
    spec.tolerance = 1e-12;
    LinearOperator op(lat, A, mu);
    SiteField u = solve(op, f, spec);
    for (std::size_t i = 0; i < u.size(); ++i)
        CHECK(u[i] == doctest::Approx(f[i] / eig).epsilon(1e-8));
}

TEST_CASE("green column equals the dense oracle at the origin") {
    Lattice lat = make_lattice(2, 20, Boundary::Dirichlet);
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    CoefficientField A = sample(s, lat, 0);
    ProblemSpec spec;
    spec.mu = 1.0;
    SiteField g = green_column(lat, A, 1.0, Coord{0, 0, 0}, spec);
    SiteField f(static_cast<std::size_t>(lat.nsites), 0.0);
    f[lat.site_index(Coord{0, 0, 0})] = 1.0;
    Eigen::VectorXd want = testsupport::dense_solve(lat, A, 1.0, f);
    const auto origin = static_cast<Eigen::Index>(lat.site_index(Coord{0, 0, 0}));
    CHECK(std::abs(g[origin] - want[origin]) <= 1e-9);
}

TEST_CASE("green function symmetry and positivity on a random field") {
    Lattice lat = make_lattice(2, 8, Boundary::Dirichlet);
    CoefficientField A = sample(board(), lat, 2718);
    ProblemSpec spec;
    spec.mu = 0.5;
    const Coord x{3, -2, 0}, y{-4, 1, 0};
    SiteField gx = green_column(lat, A, spec.mu, x, spec);
    SiteField gy = green_column(lat, A, spec.mu, y, spec);
    const double gxy = gx[lat.site_index(y)];
    const double gyx = gy[lat.site_index(x)];
    CHECK(std::abs(gxy - gyx) <= 1e-8 * std::max(std::abs(gxy), std::abs(gyx)));
    double gmax = 0.0;
    for (double v : gx) gmax = std::max(gmax, v);
    for (double v : gx) CHECK(v >= -spec.tolerance * gmax);
}

TEST_CASE("rayleigh quotient stays above mu") {
    Rng rng(31);
    Lattice lat = make_lattice(2, 6, Boundary::Dirichlet);
    CoefficientField A = sample(board(), lat, 55);
    const double mu = 0.25;
    LinearOperator op(lat, A, mu);
    for (int trial = 0; trial < 100; ++trial) {
        SiteField u = random_field(lat, rng);
        SiteField Au = op.apply(u);
        double uu = 0.0, uAu = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            uu += u[i] * u[i];
            uAu += u[i] * Au[i];
        }
        CHECK(uAu / uu >= mu * (1.0 - 1e-12));
    }
}

TEST_CASE("green monotone in mu") {
    Lattice lat = make_lattice(2, 8, Boundary::Dirichlet);
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    CoefficientField A = sample(s, lat, 0);
    ProblemSpec spec;
    spec.mu = 0.5;
    SiteField glo = green_column(lat, A, 0.5, Coord{0, 0, 0}, spec);
    spec.mu = 1.0;
    SiteField ghi = green_column(lat, A, 1.0, Coord{0, 0, 0}, spec);
    for (std::size_t i = 0; i < glo.size(); ++i) CHECK(glo[i] >= ghi[i] - 1e-10);
}

TEST_CASE("dirichlet truncation error is negligible inside the probe range") {
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    ProblemSpec spec;
    spec.mu = 1.0;
    Lattice small = make_lattice(2, 12, Boundary::Dirichlet);
    Lattice big = make_lattice(2, 24, Boundary::Dirichlet);
    SiteField gs = green_column(small, sample(s, small, 0), 1.0, Coord{0, 0, 0}, spec);
    SiteField gb = green_column(big, sample(s, big, 0), 1.0, Coord{0, 0, 0}, spec);
    for (int x0 = -4; x0 <= 4; ++x0)
        for (int x1 = -4; x1 <= 4; ++x1) {
            const double a = gs[small.site_index(Coord{x0, x1, 0})];
            const double b = gb[big.site_index(Coord{x0, x1, 0})];
            CHECK(std::abs(a - b) <= 1e-6);
        }
}

TEST_CASE("nonconvergence carries the residual") {
    Lattice lat = make_lattice(2, 10, Boundary::Dirichlet);
    CoefficientField A = sample(board(), lat, 8);
    ProblemSpec spec;
    spec.mu = 1e-6;
    spec.max_iterations = 3;
    LinearOperator op(lat, A, spec.mu);
    SiteField f(static_cast<std::size_t>(lat.nsites), 1.0);
    try {
        solve(op, f, spec);
        FAIL("expected NonConvergence");
    } catch (const NonConvergence& e) {
        CHECK(e.iterations == 3);
        CHECK(e.rel_residual > 0.0);
    }
}

TEST_CASE("jacobi preconditioning reproduces the solution") {
    Lattice lat = make_lattice(2, 6, Boundary::Dirichlet);
    CoefficientField A = sample(board(), lat, 4);
    SiteField f(static_cast<std::size_t>(lat.nsites), 0.0);
    f[lat.site_index(Coord{1, 2, 0})] = 1.0;
    ProblemSpec plain;
    plain.mu = 0.3;
    ProblemSpec pre = plain;
    pre.jacobi = true;
    LinearOperator op(lat, A, plain.mu);
    SiteField u1 = solve(op, f, plain);
    SiteField u2 = solve(op, f, pre);
    for (std::size_t i = 0; i < u1.size(); ++i) CHECK(std::abs(u1[i] - u2[i]) <= 1e-9);
}

TEST_CASE("parameter validation") {
    CHECK(choose_box_radius(1.0, 4) == 12);
    CHECK(choose_box_radius(0.01, 32) == 96);
    CHECK(choose_box_radius(0.64, 0) == 10);
    CHECK_THROWS_AS(choose_box_radius(0.0, 4), std::invalid_argument);

    Lattice lat = make_lattice(2, 2, Boundary::Dirichlet);
    EnsembleSpec s;
    s.kind = EnsembleSpec::Kind::Constant;
    CoefficientField A = sample(s, lat, 0);
    SiteField f(static_cast<std::size_t>(lat.nsites), 1.0);
    ProblemSpec bad;
    bad.mu = -1.0;
    CHECK_THROWS_AS(LinearOperator(lat, A, bad.mu), std::invalid_argument);
    ProblemSpec badtol;
    badtol.mu = 1.0;
    badtol.tolerance = 1e-3;
    LinearOperator op(lat, A, 1.0);
    CHECK_THROWS_AS(solve(op, f, badtol), std::invalid_argument);
}
