#include "homlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "homlab/rng.hpp"

namespace homlab {

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y,
                 const std::vector<double>* weights) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("fit_line: need >= 2 points of equal length");
    const std::size_t n = x.size();
    std::vector<double> w(n, 1.0);
    if (weights) {
        if (weights->size() != n) throw std::invalid_argument("fit_line: weight length mismatch");
        w = *weights;
    }
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) { sw += w[i]; sx += w[i] * x[i]; sy += w[i] * y[i]; }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
        syy += w[i] * (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return f;
}

PlaneFit fit_plane(const std::vector<double>& x1, const std::vector<double>& x2,
                   const std::vector<double>& y) {
    const std::size_t n = y.size();
    if (x1.size() != n || x2.size() != n || n < 3)
        throw std::invalid_argument("fit_plane: need >= 3 points of equal length");
    // normal equations for columns [1, x1, x2]
    double a00 = static_cast<double>(n), a01 = 0, a02 = 0, a11 = 0, a12 = 0, a22 = 0;
    double b0 = 0, b1 = 0, b2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        a01 += x1[i]; a02 += x2[i];
        a11 += x1[i] * x1[i]; a12 += x1[i] * x2[i]; a22 += x2[i] * x2[i];
        b0 += y[i]; b1 += x1[i] * y[i]; b2 += x2[i] * y[i];
    }
    double M[3][4] = {{a00, a01, a02, b0}, {a01, a11, a12, b1}, {a02, a12, a22, b2}};
    // Gaussian elimination with partial pivoting
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int r = col + 1; r < 3; ++r)
            if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
        if (std::abs(M[piv][col]) < 1e-14) throw std::invalid_argument("fit_plane: singular design");
        std::swap(M[piv], M[col]);
        for (int r = 0; r < 3; ++r) {
            if (r == col) continue;
            const double factor = M[r][col] / M[col][col];
            for (int cc = col; cc < 4; ++cc) M[r][cc] -= factor * M[col][cc];
        }
    }
    return {M[0][3] / M[0][0], M[1][3] / M[1][1], M[2][3] / M[2][2]};
}

double mean(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("mean: empty");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double variance_unbiased(const std::vector<double>& v) {
    if (v.size() < 2) throw std::invalid_argument("variance: need >= 2 values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
}

double moment_q(const std::vector<double>& v, double q) {
    if (v.empty()) throw std::invalid_argument("moment_q: empty");
    if (!(q > 0.0)) throw std::invalid_argument("moment_q: q must be > 0");
    double s = 0.0;
    for (double x : v) s += std::pow(std::abs(x), q);
    return std::pow(s / static_cast<double>(v.size()), 1.0 / q);
}

double percentile(std::vector<double> v, double p) {
    if (v.empty()) throw std::invalid_argument("percentile: empty");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("percentile: p outside [0,1]");
    std::sort(v.begin(), v.end());
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

BootstrapCI bootstrap_moment_ci(const std::vector<double>& v, double q, int n_resamples,
                                std::uint64_t seed, double confidence) {
    if (v.empty()) throw std::invalid_argument("bootstrap: empty sample");
    if (n_resamples < 10) throw std::invalid_argument("bootstrap: need >= 10 resamples");
    Rng rng(seed);
    const std::size_t n = v.size();
    std::vector<double> stats(static_cast<std::size_t>(n_resamples));
    std::vector<double> draw(n);
    for (int b = 0; b < n_resamples; ++b) {
        for (std::size_t i = 0; i < n; ++i)
            draw[i] = v[static_cast<std::size_t>(rng.next_u64() % n)];
        stats[static_cast<std::size_t>(b)] = moment_q(draw, q);
    }
    const double alpha = 1.0 - confidence;
    return {percentile(stats, alpha / 2.0), percentile(stats, 1.0 - alpha / 2.0)};
}

namespace {

// regularized incomplete gamma, series and continued fraction branches
double gamma_p_series(double a, double x) {
    double sum = 1.0 / a, term = sum;
    for (int n = 1; n < 500; ++n) {
        term *= x / (a + n);
        sum += term;
        if (std::abs(term) < std::abs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_contfrac(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

} // namespace

double chi2_sf(double x, int dof) {
    if (dof < 1) throw std::invalid_argument("chi2_sf: dof must be >= 1");
    if (x <= 0.0) return 1.0;
    const double a = 0.5 * dof, xx = 0.5 * x;
    if (xx < a + 1.0) return 1.0 - gamma_p_series(a, xx);
    return gamma_q_contfrac(a, xx);
}

double chi2_homogeneity(const std::vector<std::vector<std::int64_t>>& table) {
    if (table.empty() || table[0].empty())
        throw std::invalid_argument("chi2_homogeneity: empty table");
    const std::size_t rows = table.size(), cols = table[0].size();
    std::vector<double> rowsum(rows, 0.0), colsum(cols, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        if (table[r].size() != cols) throw std::invalid_argument("chi2_homogeneity: ragged table");
        for (std::size_t c = 0; c < cols; ++c) {
            rowsum[r] += static_cast<double>(table[r][c]);
            colsum[c] += static_cast<double>(table[r][c]);
            total += static_cast<double>(table[r][c]);
        }
    }
    if (total == 0.0) return 0.0;
    double stat = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const double expect = rowsum[r] * colsum[c] / total;
            if (expect > 0.0) {
                const double diff = static_cast<double>(table[r][c]) - expect;
                stat += diff * diff / expect;
            }
        }
    }
    return stat;
}

} // namespace homlab
