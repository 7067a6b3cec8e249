#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "homlab/ensemble.hpp"
#include "homlab/solver.hpp"
#include "homlab/stats.hpp"

namespace homlab {

struct KindMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class Profile { Bump, PlaneWave };

// Experiments run on the unit-spacing lattice with growing box: size n maps
// to box radius n/2 (periodic, side = 2*(n/2)+1), eps = 1/side,
// mu_n = mu_macro * eps^2, f_n(x) = eps^2 * phi(eps x).
struct FluctuationConfig {
    int dim = 2;
    std::vector<int> sizes;
    double mu_macro = 1.0;
    double p = 2.0, theta = 1.0;
    // exponent bookkeeping: 1 + 1/p = 1/r + 1/q (strong),
    // 2 + 1/2 = 1/r + 1/r_tilde + 1/q + 1/q_tilde (weak),
    // lambda > dim/2, 1/lambda1 + 1/lambda2 < (dim+2)/dim (weak)
    double q = 4.0 / 3.0, r = 4.0 / 3.0;
    double q_tilde = 2.0, r_tilde = 2.0;
    double lambda = 2.0;
    double lambda1 = 2.0, lambda2 = 2.0;
    Profile rhs_profile = Profile::Bump;
    Profile g_profile = Profile::PlaneWave;
    int n_samples = 200;
    EnsembleSpec ensemble{};
    ProblemSpec solver{};
    int jobs = 1;
};

void validate_strong(const FluctuationConfig& cfg);
void validate_weak(const FluctuationConfig& cfg);

double profile_value(Profile prof, int dim, const double* y); // y in [-0.5, 0.5]^dim

// (sum_x (mean over B_ball(x) of |f|^lambda)^(q/lambda))^(1/q)
double mixed_norm(const Lattice& lat, const SiteField& f, double q, double lambda,
                  double ball_radius);

struct FluctuationRow {
    int n = 0, side = 0;
    double eps = 0.0, mu_n = 0.0;
    double stat_raw = 0.0; // after any exact bias correction, before deflation
    double stat = 0.0;     // deflated when applicable, else = stat_raw
    double deflator = 1.0;
    BootstrapCI ci{}; // on stat
};

struct FluctuationResult {
    enum class Kind { Strong, Weak };
    Kind kind = Kind::Strong;
    int dim = 0;
    double p = 0.0, theta = 0.0;
    bool degenerate = false;     // every statistic is exactly 0
    bool bias_corrected = false; // the (1 - 1/N)^(1/2) factor was removed
    std::uint64_t master_seed = 0;
    std::vector<FluctuationRow> rows;
    LineFit fit_raw{}; // log stat_raw vs log eps
    LineFit fit{};     // log stat vs log eps
    double slope_target = 0.0;
    double f_mixed_norm = 0.0; // on the largest lattice
    EnsembleSpec ensemble{};
};

// S_n = (mean_s (mean_x |u_s - u_hat|^p)^theta)^(1/(p*theta)), u_hat the
// per-site mean over the same samples; exact bias correction at p=2, theta=1;
// d=2 statistic additionally divided by sqrt(|ln mu_n|) + 1 before fitting.
FluctuationResult strong_fluctuation_experiment(const FluctuationConfig& cfg,
                                                std::uint64_t master_seed);

// W_n = (mean_s |mean_x (u_s - u_hat)(x) g(eps x)|^theta)^(1/theta); exact
// bias correction at theta=2. Expected slope dim/2.
FluctuationResult weak_fluctuation_experiment(const FluctuationConfig& cfg,
                                              std::uint64_t master_seed);

struct GapReport {
    bool degenerate = false;
    double strong_slope = 0.0; // raw (undeflated) strong slope
    double weak_slope = 0.0;
    double gap = 0.0;      // weak - strong
    double expected = 0.0; // dim/2 - 1
};
GapReport strong_vs_weak_gap(const FluctuationResult& strong, const FluctuationResult& weak);

} // namespace homlab
