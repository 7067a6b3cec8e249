#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "homlab/ensemble.hpp"
#include "homlab/lattice.hpp"

namespace homlab {

struct ProblemSpec {
    double mu = 1.0;              // mass term, must be > 0
    double tolerance = 1e-10;     // relative residual target, in (0, 1e-4]
    std::int64_t max_iterations = 0; // 0 means 10 * nsites
    bool jacobi = false;          // diagonal preconditioning (deterministic)
};

void validate(const Lattice& lat, const ProblemSpec& spec);

// Convergence failures are never silent.
struct NonConvergence : std::runtime_error {
    NonConvergence(const std::string& what, double rel_residual_, std::int64_t iterations_)
        : std::runtime_error(what), rel_residual(rel_residual_), iterations(iterations_) {}
    double rel_residual;
    std::int64_t iterations;
};

// mu*u - div(a grad u) as a site stencil:
//   (L u)(x) = mu*u(x) + sum_k [ a(x,k)(u(x)-u(x+e_k)) + a(x-e_k,k)(u(x)-u(x-e_k)) ]
// Dirichlet: exterior u = 0; a dangling edge off a negative face reuses the
// site's own (site, axis) conductance so a constant field keeps the box
// operator invariant under the full octahedral symmetry group.
class LinearOperator {
public:
    LinearOperator(const Lattice& lat, const CoefficientField& A, double mu);

    void apply(const double* u, double* out) const;
    SiteField apply(const SiteField& u) const;

    const Lattice& lattice() const { return *lat_; }
    double mu() const { return mu_; }
    const std::vector<double>& diagonal() const { return diag_; }

private:
    const Lattice* lat_;
    const CoefficientField* A_;
    double mu_;
    std::vector<double> diag_;    // mu + sum of incident conductances
    std::vector<double> a_minus_; // conductance toward -axis neighbor, (site, axis)
};

struct SolveInfo {
    std::int64_t iterations = 0;
    double rel_residual = 0.0;
};

// Conjugate gradients, sequential and deterministic. Throws NonConvergence
// (carrying the final relative residual) if the target is not met.
SiteField solve(const LinearOperator& op, const SiteField& f, const ProblemSpec& spec,
                SolveInfo* info = nullptr);

SiteField green_column(const Lattice& lat, const CoefficientField& A, double mu,
                       const Coord& y, const ProblemSpec& spec, SolveInfo* info = nullptr);

// Box radius keeping truncation error negligible at probe distances:
// ceil(max(8/sqrt(mu), 3*probe_max)).
int choose_box_radius(double mu, int probe_max);

} // namespace homlab
