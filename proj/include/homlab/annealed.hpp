#pragma once

#include <cstdint>
#include <vector>

#include "homlab/ensemble.hpp"
#include "homlab/green.hpp"
#include "homlab/stats.hpp"

namespace homlab {

enum class ProbeKind { Grad, Mixed };

// How the exponential factor exp(-c sqrt(mu) r) is removed before the
// power-law fit:
//   Zero    c_hat = 0 (only sound when sqrt(mu)*max_radius is tiny)
//   Pinned  c fitted with the power-law slope pinned at its target, then the
//           slope refitted with that rate deweighted
//   Joint   full 3-parameter fit log m = logC - c sqrt(mu) r + s log r
enum class RateHandling { Zero, Pinned, Joint };

struct MomentCell {
    double moment = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

struct MomentTable {
    int dim = 0;
    double mu = 0.0;
    int box_radius = 0;
    std::vector<int> radii;
    std::vector<double> q_list;
    int n_samples = 0;
    std::uint64_t master_seed = 0;
    EnsembleSpec ensemble;
    std::vector<std::vector<MomentCell>> grad;  // [radius][q]
    std::vector<std::vector<MomentCell>> mixed; // [radius][q]
    std::vector<std::vector<double>> grad_raw;  // [sample][radius]
    std::vector<std::vector<double>> mixed_raw; // [sample][radius]
};

// Per sample: one coefficient draw, the 2*dim+1 Green columns at the origin,
// then the two local-average probes at every radius along e_1. Accumulation
// and bootstrap run in sample-index order regardless of jobs.
MomentTable estimate_moments(const EnsembleSpec& ens, int dim, double mu,
                             const std::vector<int>& radii, const std::vector<double>& q_list,
                             int n_samples, std::uint64_t master_seed, const ProblemSpec& solver,
                             int jobs = 1);

struct ScalingFit {
    double exponent = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double c_hat = 0.0;
    double q = 0.0;
    ProbeKind which = ProbeKind::Grad;
};

// Regress log(moment * exp(+c_hat sqrt(mu) r)) on log r.
ScalingFit fit_decay_exponent(const MomentTable& table, double q, ProbeKind which, double c_hat);

// Rate fit with the power-law slope pinned at target_exponent; clamped >= 0.
double pinned_rate_fit(const MomentTable& table, double q, ProbeKind which,
                       double target_exponent);

// Estimate the rate per the chosen handling, then fit the power law.
ScalingFit fit_with_rate(const MomentTable& table, double q, ProbeKind which, RateHandling rate,
                         double target);

struct DdReport {
    ScalingFit grad_fit;  // q = 2
    ScalingFit mixed_fit; // q = 1
    double grad_target = 0.0;  // -(d-1)
    double mixed_target = 0.0; // -d
    double grad_tolerance = 0.0, mixed_tolerance = 0.0;
    bool grad_pass = false, mixed_pass = false;
    RateHandling rate = RateHandling::Pinned;
};
DdReport dd_moment_check(const MomentTable& table, RateHandling rate = RateHandling::Pinned,
                         double grad_tolerance = 0.25, double mixed_tolerance = 0.35);

struct FlatnessReport {
    double q_lo = 0.0, q_hi = 0.0;
    std::vector<int> radii;
    std::vector<double> grad_ratio;  // moment(q_hi)/moment(q_lo) per radius
    std::vector<double> mixed_ratio;
    double grad_max_ratio = 0.0, mixed_max_ratio = 0.0;
    double grad_end_over_start = 0.0, mixed_end_over_start = 0.0;
};
FlatnessReport high_moment_flatness(const MomentTable& table, double q_lo, double q_hi);

struct WeightedSupReport {
    double beta = 0.0, q = 0.0;
    double grad_full = 0.0, grad_prefix = 0.0, grad_rel_change = 0.0;
    double mixed_full = 0.0, mixed_prefix = 0.0, mixed_rel_change = 0.0;
};
// Per sample sup over the radius grid of r^(d-1-beta)*(grad probe) and
// r^(d-beta)*(mixed probe); q-th moments on the full grid and on the grid
// with the largest radius dropped, to expose stabilization.
WeightedSupReport weighted_sup_moment(const MomentTable& table, double beta, double q);

} // namespace homlab
