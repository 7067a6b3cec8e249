#pragma once

#include <cstdint>
#include <vector>

#include "homlab/ensemble.hpp"
#include "homlab/solver.hpp"
#include "homlab/stats.hpp"

namespace homlab {

struct LipschitzRecord {
    int R = 0;
    Coord x{};
    double mu = 0.0;
    double numerator = 0.0;   // mean_{x' in B_1(0)} |u(x+x') - u(x')| / |x|
    double denominator = 0.0; // R^-1 (mean_{B_2R} u^2)^(1/2) + R^-1 (mean_{B_2R} |R^2 f|^p)^(1/p)
    double quotient = 0.0;
};

// The difference-quotient statistic at probe x, 2 < |x| <= R, p > dim.
// Pass u_base to reuse a solve; the box must contain B_2R(0).
LipschitzRecord lipschitz_quotient(const Lattice& lat, const CoefficientField& A, double mu,
                                   const SiteField& f, int R, const Coord& x, double p,
                                   const ProblemSpec& spec, const SiteField* u_base = nullptr);

enum class RhsFamily { BumpOrigin, BumpNearProbe, Oscillatory };
SiteField make_rhs(const Lattice& lat, RhsFamily family, int R);

struct LipschitzScanRow {
    int R = 0;
    int probe_class = 0; // 0: |x| = max(3, R/4), 1: R/2, 2: R
    Coord probe{};
    double moment = 0.0;
    BootstrapCI ci{};
};

struct LipschitzScanReport {
    double q = 0.0, p = 0.0;
    int n_samples = 0;
    std::vector<int> R_list;
    std::vector<LipschitzScanRow> rows; // R-major, probe-minor
    // per probe class: moment at largest R / moment at smallest R, and the
    // spread max/min across R
    std::vector<double> end_over_start;
    std::vector<double> spread;
    double max_spread = 0.0;
};

// For each R: mu = 0.25/R^2, Dirichlet box of radius 2R+2, probes along e_1;
// per sample the quotient is maximized over the right-hand-side family.
LipschitzScanReport moment_boundedness_scan(const EnsembleSpec& ens, int dim,
                                            const std::vector<int>& R_list, double q, double p,
                                            int n_samples, std::uint64_t master_seed,
                                            const ProblemSpec& solver, int jobs = 1);

enum class BoundednessMode { RingSource, BumpSource };

struct BoundednessReport {
    int scale = 0;
    double q = 0.0;
    int n_samples = 0;
    std::vector<double> constants; // per-sample fitted constant
    double min_c = 0.0, max_c = 0.0;
    double stability = 0.0; // max/min
};

// sup_{B_scale} |u| against the ball norms of u on B_2scale and f on B_2scale
// (exponent q > dim/2, the p = infinity case of the exponent relation).
// RingSource puts the source outside B_2scale so u solves the homogeneous
// equation there.
BoundednessReport local_boundedness_check(const EnsembleSpec& ens, int dim, int scale, double q,
                                          int n_samples, std::uint64_t master_seed,
                                          BoundednessMode mode, const ProblemSpec& solver,
                                          int jobs = 1);

} // namespace homlab
