#pragma once

#include <cstdint>
#include <vector>

namespace homlab {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

// Ordinary least squares y ~ intercept + slope*x; optional weights.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>* weights = nullptr);

// Least squares for y ~ c0 + c1*x1 + c2*x2 (3x3 normal equations).
struct PlaneFit {
    double c0 = 0.0, c1 = 0.0, c2 = 0.0;
};
PlaneFit fit_plane(const std::vector<double>& x1, const std::vector<double>& x2,
                   const std::vector<double>& y);

// Empirical q-th moment (mean of v^q)^(1/q), sample order fixed by caller.
double moment_q(const std::vector<double>& v, double q);

double mean(const std::vector<double>& v);
double variance_unbiased(const std::vector<double>& v);

// p in [0,1]; linear interpolation between order statistics.
double percentile(std::vector<double> v, double p);

struct BootstrapCI {
    double lo = 0.0;
    double hi = 0.0;
};

// Percentile bootstrap for moment_q, deterministic for a given seed.
BootstrapCI bootstrap_moment_ci(const std::vector<double>& v, double q, int n_resamples,
                                std::uint64_t seed, double confidence = 0.95);

// Survival function of the chi-square distribution (regularized upper
// incomplete gamma), used by the stationarity proxy test.
double chi2_sf(double x, int dof);

// Homogeneity chi-square statistic for a groups-by-bins count table.
double chi2_homogeneity(const std::vector<std::vector<std::int64_t>>& table);

} // namespace homlab
