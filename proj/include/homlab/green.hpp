#pragma once

#include <cstdint>
#include <vector>

#include "homlab/solver.hpp"
#include "homlab/stats.hpp"

namespace homlab {

// Square of the discrete gradient at one site: per axis the average of the
// two one-sided differences squared, so a linear ramp reports its exact
// slope. Exterior values are 0 on Dirichlet boxes.
double grad_sq_site(const Lattice& lat, const SiteField& u, std::int64_t site);

// Plain local average (mean over B_L(x) of grad_sq_site)^(1/2); no distance
// precondition, usable for solutions as well as Green columns.
double local_gradient_avg(const Lattice& lat, const SiteField& u, const Coord& x, double L);

// (grad G)_L(x, y) from the column G(., y). Requires |x - y| >= 3L.
double local_avg_gradient(const Lattice& lat, const SiteField& green_col, const Coord& x,
                          const Coord& y, double L);

// The 2*dim+1 Green columns with sources in the unit ball around y, in the
// fixed order: center, then +e_k / -e_k per axis. n_solves records the exact
// solve count for accounting.
struct GreenColumns {
    Coord y{};
    int dim = 0;
    std::vector<SiteField> cols;
    int n_solves = 0;
};
GreenColumns green_ball_columns(const Lattice& lat, const CoefficientField& A, double mu,
                                const Coord& y, const ProblemSpec& spec);

// Source-side difference fields H = G(., y'+e_l) - G(., y') over the 2*dim
// spoke edges of the unit source ball, grouped per axis.
struct MixedDifferences {
    Coord y{};
    int dim = 0;
    std::vector<SiteField> diffs; // 2 per axis: [axis l] spokes (y,l) and (y-e_l,l)
};
MixedDifferences make_mixed_differences(const Lattice& lat, const GreenColumns& cols);

// (grad grad G)_L(x, y): mean over x' in B_L(x) and the source spokes of the
// squared mixed second difference, square-rooted. Requires |x - y| >= 3L.
double mixed_second_gradient(const Lattice& lat, const MixedDifferences& md, const Coord& x,
                             double L);

// Fits envelope constants (C, c) for the pointwise bound
//   G(x,0) <= C exp(-c sqrt(mu) |x|) * phi_d(|x|),
// phi_2 = log(2 + 1/(sqrt(mu)|x|)), phi_3 = 1/|x|, and for the annulus bound
//   (R^-d sum_{R<|x|<=2R} |grad G|^2)^(1/2) <= C exp(-c sqrt(mu) R) R^(1-d),
// by regressing the shape-corrected log values on -sqrt(mu)*distance.
struct DecayBoundReport {
    double point_C = 0.0, point_c = 0.0, point_r2 = 0.0;
    double annulus_C = 0.0, annulus_c = 0.0, annulus_r2 = 0.0;
    std::vector<int> radii;
    std::vector<double> point_vals;   // G(r e_1)
    std::vector<double> annulus_vals; // annulus-averaged gradient at R
};
DecayBoundReport check_deterministic_bounds(const Lattice& lat, const CoefficientField& A,
                                            double mu, const std::vector<int>& probe_radii,
                                            const ProblemSpec& spec);

} // namespace homlab
