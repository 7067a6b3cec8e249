#include "homlab/solver.hpp"

#include <cmath>

namespace homlab {

void validate(const Lattice& lat, const ProblemSpec& spec) {
    if (!(spec.mu > 0.0)) throw std::invalid_argument("problem.mu: must be > 0");
    if (!(spec.tolerance > 0.0 && spec.tolerance <= 1e-4))
        throw std::invalid_argument("problem.tolerance: must lie in (0, 1e-4]");
    if (spec.max_iterations < 0)
        throw std::invalid_argument("problem.max_iterations: must be >= 0");
    (void)lat;
}

LinearOperator::LinearOperator(const Lattice& lat, const CoefficientField& A, double mu)
    : lat_(&lat), A_(&A), mu_(mu) {
    if (static_cast<std::int64_t>(A.a.size()) != lat.nedges())
        throw std::invalid_argument("LinearOperator: coefficient length != edge count");
    if (!(mu > 0.0)) throw std::invalid_argument("LinearOperator: mu must be > 0");

    const int dim = lat.dim;
    diag_.resize(static_cast<std::size_t>(lat.nsites));
    a_minus_.resize(static_cast<std::size_t>(lat.nedges()));
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        double d = mu;
        for (int k = 0; k < dim; ++k) {
            const std::int32_t jm = lat.nbr_minus[k][i];
            const double am = (jm >= 0) ? A.a[static_cast<std::int64_t>(jm) * dim + k]
                                        : A.a[i * dim + k];
            a_minus_[i * dim + k] = am;
            d += A.a[i * dim + k] + am;
        }
        diag_[i] = d;
    }
}

void LinearOperator::apply(const double* u, double* out) const {
    const Lattice& lat = *lat_;
    const int dim = lat.dim;
    const double* a = A_->a.data();
    const double* am = a_minus_.data();
    const double* dg = diag_.data();
    const std::int64_t n = lat.nsites;

    if (dim == 2) {
        const std::int32_t* p0 = lat.nbr_plus[0].data();
        const std::int32_t* m0 = lat.nbr_minus[0].data();
        const std::int32_t* p1 = lat.nbr_plus[1].data();
        const std::int32_t* m1 = lat.nbr_minus[1].data();
        for (std::int64_t i = 0; i < n; ++i) {
            double acc = dg[i] * u[i];
            const std::int64_t e = i * 2;
            if (p0[i] >= 0) acc -= a[e] * u[p0[i]];
            if (m0[i] >= 0) acc -= am[e] * u[m0[i]];
            if (p1[i] >= 0) acc -= a[e + 1] * u[p1[i]];
            if (m1[i] >= 0) acc -= am[e + 1] * u[m1[i]];
            out[i] = acc;
        }
    } else {
        for (std::int64_t i = 0; i < n; ++i) {
            double acc = dg[i] * u[i];
            const std::int64_t e = i * 3;
            for (int k = 0; k < 3; ++k) {
                const std::int32_t jp = lat.nbr_plus[k][i];
                const std::int32_t jm = lat.nbr_minus[k][i];
                if (jp >= 0) acc -= a[e + k] * u[jp];
                if (jm >= 0) acc -= am[e + k] * u[jm];
            }
            out[i] = acc;
        }
    }
}

SiteField LinearOperator::apply(const SiteField& u) const {
    if (static_cast<std::int64_t>(u.size()) != lat_->nsites)
        throw std::invalid_argument("apply: field length != site count");
    SiteField out(u.size());
    apply(u.data(), out.data());
    return out;
}

namespace {

double dot(const std::vector<double>& x, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

} // namespace

SiteField solve(const LinearOperator& op, const SiteField& f, const ProblemSpec& spec,
                SolveInfo* info) {
    const Lattice& lat = op.lattice();
    validate(lat, spec);
    if (static_cast<std::int64_t>(f.size()) != lat.nsites)
        throw std::invalid_argument("solve: rhs length != site count");

    const std::size_t n = f.size();
    SiteField u(n, 0.0);
    const double fnorm = std::sqrt(dot(f, f));
    if (fnorm == 0.0) {
        if (info) *info = {0, 0.0};
        return u;
    }
    const double target = spec.tolerance * fnorm;
    const std::int64_t max_it =
        spec.max_iterations > 0 ? spec.max_iterations : 10 * lat.nsites;

    std::vector<double> r = f; // u0 = 0
    std::vector<double> z(n), p(n), q(n);
    std::vector<double> inv_diag;
    if (spec.jacobi) {
        inv_diag.resize(n);
        for (std::size_t i = 0; i < n; ++i) inv_diag[i] = 1.0 / op.diagonal()[i];
        for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    } else {
        z = r;
    }
    p = z;
    double rz = dot(r, z);
    double rnorm2 = dot(r, r);

    for (std::int64_t it = 1; it <= max_it; ++it) {
        op.apply(p.data(), q.data());
        const double pq = dot(p, q);
        if (!(pq > 0.0))
            throw NonConvergence("solve: operator lost positive definiteness",
                                 std::sqrt(rnorm2) / fnorm, it);
        const double alpha = rz / pq;
        for (std::size_t i = 0; i < n; ++i) u[i] += alpha * p[i];
        for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * q[i];
        rnorm2 = dot(r, r);
        if (std::sqrt(rnorm2) <= target) {
            if (info) *info = {it, std::sqrt(rnorm2) / fnorm};
            return u;
        }
        if (spec.jacobi) {
            for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
        } else {
            z = r;
        }
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw NonConvergence("solve: conjugate gradients exceeded max iterations",
                         std::sqrt(rnorm2) / fnorm, max_it);
}

SiteField green_column(const Lattice& lat, const CoefficientField& A, double mu,
                       const Coord& y, const ProblemSpec& spec, SolveInfo* info) {
    if (!lat.in_box(y)) throw std::invalid_argument("green_column: source outside box");
    SiteField f(static_cast<std::size_t>(lat.nsites), 0.0);
    f[static_cast<std::size_t>(lat.site_index(y))] = 1.0;
    LinearOperator op(lat, A, mu);
    return solve(op, f, spec, info);
}

int choose_box_radius(double mu, int probe_max) {
    if (!(mu > 0.0)) throw std::invalid_argument("choose_box_radius: mu must be > 0");
    if (probe_max < 0) throw std::invalid_argument("choose_box_radius: negative probe range");
    const double r = std::max(8.0 / std::sqrt(mu), 3.0 * static_cast<double>(probe_max));
    return static_cast<int>(std::ceil(r));
}

} // namespace homlab
