#include "homlab/fluctuations.hpp"

#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "homlab/rng.hpp"

namespace homlab {

namespace {

constexpr double kPi = 3.14159265358979323846;

void validate_common(const FluctuationConfig& cfg) {
    if (cfg.dim != 2 && cfg.dim != 3)
        throw std::invalid_argument("fluctuations: dim must be 2 or 3");
    if (cfg.sizes.size() < 3)
        throw std::invalid_argument("fluctuations: scaling fit needs at least 3 sizes");
    for (std::size_t i = 0; i < cfg.sizes.size(); ++i) {
        if (cfg.sizes[i] < 8) throw std::invalid_argument("fluctuations: sizes must be >= 8");
        if (i > 0 && cfg.sizes[i] <= cfg.sizes[i - 1])
            throw std::invalid_argument("fluctuations: sizes must be strictly increasing");
    }
    if (cfg.mu_macro <= 0.0) throw std::invalid_argument("fluctuations: mu_macro must be > 0");
    if (cfg.p < 1.0 || cfg.theta <= 0.0)
        throw std::invalid_argument("fluctuations: need p >= 1 and theta > 0");
    if (cfg.n_samples < 16) throw std::invalid_argument("fluctuations: need N >= 16");
    if (cfg.lambda <= cfg.dim / 2.0)
        throw std::invalid_argument("fluctuations: lambda > d/2 required, got lambda = " +
                                    std::to_string(cfg.lambda));
    validate(cfg.ensemble);
}

} // namespace

void validate_strong(const FluctuationConfig& cfg) {
    validate_common(cfg);
    const double lhs = 1.0 + 1.0 / cfg.p;
    const double rhs = 1.0 / cfg.r + 1.0 / cfg.q;
    if (std::abs(lhs - rhs) > 1e-9)
        throw std::invalid_argument(
            "fluctuations: exponent relation 1 + 1/p = 1/r + 1/q violated");
}

void validate_weak(const FluctuationConfig& cfg) {
    validate_common(cfg);
    const double rhs = 1.0 / cfg.r + 1.0 / cfg.r_tilde + 1.0 / cfg.q + 1.0 / cfg.q_tilde;
    if (std::abs(2.5 - rhs) > 1e-9)
        throw std::invalid_argument(
            "fluctuations: exponent relation 2 + 1/2 = 1/r + 1/r~ + 1/q + 1/q~ violated");
    if (1.0 / cfg.lambda1 + 1.0 / cfg.lambda2 >= (cfg.dim + 2.0) / cfg.dim)
        throw std::invalid_argument(
            "fluctuations: exponent relation 1/lambda1 + 1/lambda2 < (d+2)/d violated");
}

double profile_value(Profile prof, int dim, const double* y) {
    if (prof == Profile::PlaneWave) return std::cos(2.0 * kPi * y[0]);
    double v = 1.0;
    for (int k = 0; k < dim; ++k) v *= 0.5 * (1.0 + std::cos(2.0 * kPi * y[k]));
    return v;
}

double mixed_norm(const Lattice& lat, const SiteField& f, double q, double lambda,
                  double ball_radius) {
    if (q < 1.0 || lambda < 1.0)
        throw std::invalid_argument("mixed_norm: exponents must be >= 1");
    if (f.size() != static_cast<std::size_t>(lat.nsites))
        throw std::invalid_argument("mixed_norm: field size mismatch");
    double acc = 0.0;
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const auto ball = ball_sites(lat, lat.site_coord(i), ball_radius);
        double local = 0.0;
        for (const auto s : ball)
            local += std::pow(std::abs(f[static_cast<std::size_t>(s)]), lambda);
        local /= static_cast<double>(ball.size());
        acc += std::pow(local, q / lambda);
    }
    return std::pow(acc, 1.0 / q);
}

namespace {

struct SizeRun {
    Lattice lat;
    SiteField f;
    double eps = 0.0, mu_n = 0.0;
    std::vector<SiteField> u; // per sample
};

SizeRun run_size(const FluctuationConfig& cfg, int n, int size_idx, std::uint64_t master_seed) {
    SizeRun sr;
    const int radius = n / 2;
    sr.lat = make_lattice(cfg.dim, radius, Boundary::Periodic);
    sr.eps = 1.0 / static_cast<double>(sr.lat.side);
    sr.mu_n = cfg.mu_macro * sr.eps * sr.eps;

    sr.f.resize(static_cast<std::size_t>(sr.lat.nsites));
    for (std::int64_t i = 0; i < sr.lat.nsites; ++i) {
        const Coord c = sr.lat.site_coord(i);
        double y[3] = {0, 0, 0};
        for (int k = 0; k < cfg.dim; ++k) y[k] = sr.eps * c[static_cast<std::size_t>(k)];
        sr.f[static_cast<std::size_t>(i)] =
            sr.eps * sr.eps * profile_value(cfg.rhs_profile, cfg.dim, y);
    }
    double fbar = 0.0;
    for (const double v : sr.f) fbar += v;
    fbar /= static_cast<double>(sr.lat.nsites);
    SiteField f0 = sr.f;
    for (double& v : f0) v -= fbar;
    const double shift = fbar / sr.mu_n; // exact periodic constant mode

    ProblemSpec ps = cfg.solver;
    ps.mu = sr.mu_n;
    sr.u.assign(static_cast<std::size_t>(cfg.n_samples), SiteField{});
    std::vector<std::string> errors(static_cast<std::size_t>(cfg.n_samples));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= cfg.n_samples) return;
            try {
                const std::uint64_t seed =
                    child_seed(master_seed, size_idx * cfg.n_samples + s);
                const CoefficientField A = sample(cfg.ensemble, sr.lat, seed);
                LinearOperator op(sr.lat, A, sr.mu_n);
                SiteField u = solve(op, f0, ps);
                for (double& v : u) v += shift;
                sr.u[static_cast<std::size_t>(s)] = std::move(u);
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(s)] =
                    "size " + std::to_string(n) + " sample " + std::to_string(s) + ": " +
                    e.what();
            }
        }
    };
    const int jobs = cfg.jobs < 1 ? 1 : cfg.jobs;
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& msg : errors)
        if (!msg.empty()) throw std::runtime_error("fluctuation run: " + msg);
    return sr;
}

SiteField sample_mean_field(const SizeRun& sr) {
    // a point mass is its own mean; averaging identical samples rounds at the
    // ulp level and would leak noise into the centered statistics
    bool all_equal = true;
    for (std::size_t s = 1; s < sr.u.size() && all_equal; ++s)
        if (sr.u[s] != sr.u[0]) all_equal = false;
    if (all_equal) return sr.u[0];
    SiteField uhat(sr.u[0].size(), 0.0);
    for (const auto& us : sr.u)
        for (std::size_t i = 0; i < uhat.size(); ++i) uhat[i] += us[i];
    const double inv = 1.0 / static_cast<double>(sr.u.size());
    for (double& v : uhat) v *= inv;
    return uhat;
}

void finish_fits(FluctuationResult& res) {
    res.degenerate = true;
    for (const auto& row : res.rows)
        if (row.stat_raw > 0.0) res.degenerate = false;
    if (res.degenerate) return;
    std::vector<double> xs, ys_raw, ys;
    for (const auto& row : res.rows) {
        xs.push_back(std::log(row.eps));
        ys_raw.push_back(std::log(row.stat_raw));
        ys.push_back(std::log(row.stat));
    }
    res.fit_raw = fit_line(xs, ys_raw);
    res.fit = fit_line(xs, ys);
}

BootstrapCI stat_ci(const std::vector<double>& contrib, double inv_power, double scale,
                    std::uint64_t seed) {
    // percentile bootstrap of (mean contrib)^(inv_power), scaled
    const BootstrapCI raw = bootstrap_moment_ci(contrib, 1.0, 400, seed);
    BootstrapCI out;
    out.lo = std::pow(raw.lo, inv_power) * scale;
    out.hi = std::pow(raw.hi, inv_power) * scale;
    return out;
}

} // namespace

FluctuationResult strong_fluctuation_experiment(const FluctuationConfig& cfg,
                                                std::uint64_t master_seed) {
    validate_strong(cfg);
    FluctuationResult res;
    res.kind = FluctuationResult::Kind::Strong;
    res.dim = cfg.dim;
    res.p = cfg.p;
    res.theta = cfg.theta;
    res.master_seed = master_seed;
    res.ensemble = cfg.ensemble;
    res.slope_target = 1.0;
    res.bias_corrected = cfg.p == 2.0 && cfg.theta == 1.0;

    for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
        const int n = cfg.sizes[si];
        SizeRun sr = run_size(cfg, n, static_cast<int>(si), master_seed);
        const SiteField uhat = sample_mean_field(sr);
        std::vector<double> contrib(static_cast<std::size_t>(cfg.n_samples));
        for (std::size_t s = 0; s < sr.u.size(); ++s) {
            double acc = 0.0;
            const SiteField& us = sr.u[s];
            for (std::size_t i = 0; i < us.size(); ++i)
                acc += std::pow(std::abs(us[i] - uhat[i]), cfg.p);
            acc /= static_cast<double>(us.size());
            contrib[s] = std::pow(acc, cfg.theta);
        }
        double m = 0.0;
        for (const double c : contrib) m += c;
        m /= static_cast<double>(contrib.size());
        const double inv_power = 1.0 / (cfg.p * cfg.theta);
        double stat_raw = std::pow(m, inv_power);
        double corr = 1.0;
        if (res.bias_corrected) corr = 1.0 / std::sqrt(1.0 - 1.0 / cfg.n_samples);
        stat_raw *= corr;

        FluctuationRow row;
        row.n = n;
        row.side = sr.lat.side;
        row.eps = sr.eps;
        row.mu_n = sr.mu_n;
        row.stat_raw = stat_raw;
        row.deflator = cfg.dim == 2 ? std::sqrt(std::abs(std::log(sr.mu_n))) + 1.0 : 1.0;
        row.stat = stat_raw / row.deflator;
        row.ci = stat_ci(contrib, inv_power, corr / row.deflator,
                         child_seed(master_seed ^ 0x73747263690000ull, static_cast<int>(si)));
        res.rows.push_back(row);
        if (si == cfg.sizes.size() - 1)
            res.f_mixed_norm = mixed_norm(sr.lat, sr.f, cfg.q, cfg.lambda, 1.0);
    }
    finish_fits(res);
    return res;
}

FluctuationResult weak_fluctuation_experiment(const FluctuationConfig& cfg,
                                              std::uint64_t master_seed) {
    validate_weak(cfg);
    FluctuationResult res;
    res.kind = FluctuationResult::Kind::Weak;
    res.dim = cfg.dim;
    res.p = cfg.p;
    res.theta = cfg.theta;
    res.master_seed = master_seed;
    res.ensemble = cfg.ensemble;
    res.slope_target = cfg.dim / 2.0;
    res.bias_corrected = cfg.theta == 2.0;

    for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
        const int n = cfg.sizes[si];
        SizeRun sr = run_size(cfg, n, static_cast<int>(si), master_seed);
        const SiteField uhat = sample_mean_field(sr);
        SiteField g(static_cast<std::size_t>(sr.lat.nsites));
        for (std::int64_t i = 0; i < sr.lat.nsites; ++i) {
            const Coord c = sr.lat.site_coord(i);
            double y[3] = {0, 0, 0};
            for (int k = 0; k < cfg.dim; ++k) y[k] = sr.eps * c[static_cast<std::size_t>(k)];
            g[static_cast<std::size_t>(i)] = profile_value(cfg.g_profile, cfg.dim, y);
        }
        std::vector<double> contrib(static_cast<std::size_t>(cfg.n_samples));
        for (std::size_t s = 0; s < sr.u.size(); ++s) {
            double j = 0.0;
            const SiteField& us = sr.u[s];
            for (std::size_t i = 0; i < us.size(); ++i) j += (us[i] - uhat[i]) * g[i];
            j /= static_cast<double>(us.size());
            contrib[s] = std::pow(std::abs(j), cfg.theta);
        }
        double m = 0.0;
        for (const double c : contrib) m += c;
        m /= static_cast<double>(contrib.size());
        const double inv_power = 1.0 / cfg.theta;
        double stat_raw = std::pow(m, inv_power);
        double corr = 1.0;
        if (res.bias_corrected) corr = 1.0 / std::sqrt(1.0 - 1.0 / cfg.n_samples);
        stat_raw *= corr;

        FluctuationRow row;
        row.n = n;
        row.side = sr.lat.side;
        row.eps = sr.eps;
        row.mu_n = sr.mu_n;
        row.stat_raw = stat_raw;
        row.deflator = 1.0;
        row.stat = stat_raw;
        row.ci = stat_ci(contrib, inv_power, corr,
                         child_seed(master_seed ^ 0x77656b63690000ull, static_cast<int>(si)));
        res.rows.push_back(row);
        if (si == cfg.sizes.size() - 1)
            res.f_mixed_norm = mixed_norm(sr.lat, sr.f, cfg.q, cfg.lambda, 1.0);
    }
    finish_fits(res);
    return res;
}

GapReport strong_vs_weak_gap(const FluctuationResult& strong, const FluctuationResult& weak) {
    if (strong.kind != FluctuationResult::Kind::Strong ||
        weak.kind != FluctuationResult::Kind::Weak)
        throw KindMismatch("strong_vs_weak_gap: results passed in the wrong roles");
    if (strong.dim != weak.dim) throw KindMismatch("strong_vs_weak_gap: dimension mismatch");
    if (strong.rows.size() != weak.rows.size())
        throw KindMismatch("strong_vs_weak_gap: size grids differ");
    for (std::size_t i = 0; i < strong.rows.size(); ++i)
        if (strong.rows[i].n != weak.rows[i].n)
            throw KindMismatch("strong_vs_weak_gap: size grids differ");
    if (strong.ensemble.kind != weak.ensemble.kind)
        throw KindMismatch("strong_vs_weak_gap: ensembles differ");
    GapReport rep;
    rep.expected = strong.dim / 2.0 - 1.0;
    if (strong.degenerate || weak.degenerate) {
        rep.degenerate = true;
        return rep;
    }
    rep.strong_slope = strong.fit_raw.slope;
    rep.weak_slope = weak.fit.slope;
    rep.gap = rep.weak_slope - rep.strong_slope;
    return rep;
}

} // namespace homlab
