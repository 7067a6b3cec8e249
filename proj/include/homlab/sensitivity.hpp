#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "homlab/ensemble.hpp"
#include "homlab/solver.hpp"

namespace homlab {

// Local perturbation at z: candidate rewrites of the dim outgoing edges
// (z, k). Every edge belongs to exactly one perturbation ball under this
// convention, and candidates agree with the base field everywhere else.
struct PerturbationSet {
    Coord z{};
    int ell = 1;      // perturbation scale; fixed to the lattice spacing
    int n_random = 6; // random patches on top of {unperturbed, all-lo, all-hi}
    std::uint64_t seed = 0;
};

// Candidate patches, each a per-axis edge value in [lambda, 1]. Order:
// unperturbed, all-lambda, all-1, then n_random uniform draws.
std::vector<std::vector<double>> candidate_patches(const Lattice& lat, const CoefficientField& A,
                                                   const PerturbationSet& pert);

void apply_patch(const Lattice& lat, CoefficientField& A, const Coord& z,
                 const std::vector<double>& patch);

// Ball-averaged solution shift mean_{B_ell(x)} |u - u_candidate|, maximized
// over candidates. Re-solves per candidate; pass u_base to skip the base
// solve. A lower bound on the true oscillation over all admissible fields.
double oscillation(const Lattice& lat, const CoefficientField& A, double mu, const SiteField& f,
                   const Coord& x, const PerturbationSet& pert, const ProblemSpec& spec,
                   const SiteField* u_base = nullptr);

struct KernelInputs {
    double dist = 0.0; // |x - z|
    int ell = 1;
    double green_grad = 0.0;  // (grad G)_{2 ell}(x, z)
    double grad_u_ell = 0.0;  // (grad u)_{ell}(z)
    double grad_u_9ell = 0.0; // (grad u)_{9 ell}(z)
    double f_norm = 0.0;      // ball norm of f on B_{2 ell}(x)
    std::uint64_t sample_id_u = 0, sample_id_g = 0;
};

bool kernel_is_far(double dist, int ell);

// Far branch (|x-z| > 6 ell): green_grad * grad_u_ell.
// Near branch: f_norm + grad_u_9ell. Inputs must come from the same sample.
double kernel_K(const KernelInputs& in);

struct SensitivityRecord {
    int sample = 0;
    Coord x{}, z{};
    double dist = 0.0;
    bool far = false;
    double osc = 0.0;
    double kernel = 0.0;
    double ratio = 0.0;
};

struct SensitivitySummary {
    int n_records = 0, n_far = 0, n_near = 0;
    double median_ratio = 0.0, p99_ratio = 0.0, max_ratio = 0.0;
};

// Per sample and (x, z) pair: oscillation vs kernel value. lambda2 is the
// exponent of the ball norm of f in the near branch.
SensitivitySummary sensitivity_bound_experiment(
    const Lattice& lat, const EnsembleSpec& ens, double mu, const SiteField& f,
    const std::vector<std::pair<Coord, Coord>>& pairs, int n_samples, std::uint64_t master_seed,
    const ProblemSpec& spec, int n_random_patches = 6, double lambda2 = 2.0, int jobs = 1,
    std::vector<SensitivityRecord>* records = nullptr);

struct GapFunctional {
    enum class Kind { SingleEdge, PointValue, BallAverage };
    Kind kind = Kind::PointValue;
    Coord site{};
    int axis = 0; // SingleEdge: the edge (site, axis)
    double ball_radius = 1.0;
};

struct GapCheckResult {
    int n_samples = 0;
    double var = 0.0;
    double var_se = 0.0; // standard error of the variance estimate
    double osc_sq_sum_mean = 0.0;
    double ratio = 0.0; // var / osc_sq_sum_mean
    double ratio_se = 0.0;
    int grid_sites = 0; // perturbation centers visited before truncation
};

// Monte Carlo variance of the functional against the mean perturbation-
// oscillation sum over a covering grid of centers, expanded shell by shell
// around the functional's site and truncated once a whole shell contributes
// less than 1e-12 of the running sum.
GapCheckResult spectral_gap_check(const Lattice& lat, const EnsembleSpec& ens,
                                  const GapFunctional& zeta, double mu, const SiteField& f,
                                  int n_samples, std::uint64_t master_seed,
                                  const ProblemSpec& spec, int n_random_patches = 2,
                                  int jobs = 1);

} // namespace homlab
