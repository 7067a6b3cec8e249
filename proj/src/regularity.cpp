#include "homlab/regularity.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "homlab/rng.hpp"

namespace homlab {

namespace {

double ball_mean_pow(const Lattice& lat, const SiteField& v, const Coord& c, double L, double p) {
    const auto ball = ball_sites(lat, c, L);
    double acc = 0.0;
    for (const auto s : ball) acc += std::pow(std::abs(v[static_cast<std::size_t>(s)]), p);
    return std::pow(acc / static_cast<double>(ball.size()), 1.0 / p);
}

} // namespace

LipschitzRecord lipschitz_quotient(const Lattice& lat, const CoefficientField& A, double mu,
                                   const SiteField& f, int R, const Coord& x, double p,
                                   const ProblemSpec& spec, const SiteField* u_base) {
    if (p <= lat.dim)
        throw std::invalid_argument("lipschitz_quotient: p > d required, got p = " +
                                    std::to_string(p));
    if (R < 2) throw std::invalid_argument("lipschitz_quotient: R must be >= 2");
    const double x2 = dist2(lat, x, Coord{});
    if (x2 <= 4.0 + 1e-9)
        throw std::invalid_argument("lipschitz_quotient: probe must satisfy |x| > 2");
    if (x2 > static_cast<double>(R) * R + 1e-9)
        throw std::invalid_argument("lipschitz_quotient: probe must lie in B_R");
    if (lat.boundary == Boundary::Dirichlet && lat.radius < 2 * R)
        throw std::invalid_argument("lipschitz_quotient: box must contain B_2R");

    ProblemSpec ps = spec;
    ps.mu = mu;
    SiteField base;
    if (u_base == nullptr) {
        LinearOperator op(lat, A, mu);
        base = solve(op, f, ps);
        u_base = &base;
    }
    const SiteField& u = *u_base;

    LipschitzRecord rec;
    rec.R = R;
    rec.x = x;
    rec.mu = mu;

    const auto unit = ball_sites(lat, Coord{}, 1.0);
    const double xabs = std::sqrt(x2);
    double num = 0.0;
    for (const auto s : unit) {
        const Coord xp = lat.site_coord(s);
        Coord shifted = xp;
        for (int k = 0; k < lat.dim; ++k)
            shifted[static_cast<std::size_t>(k)] += x[static_cast<std::size_t>(k)];
        if (lat.boundary == Boundary::Periodic) {
            const int n = lat.side;
            for (int k = 0; k < lat.dim; ++k) {
                int v = shifted[static_cast<std::size_t>(k)];
                v = (v + lat.radius) % n;
                if (v < 0) v += n;
                shifted[static_cast<std::size_t>(k)] = v - lat.radius;
            }
        }
        if (!lat.in_box(shifted))
            throw std::invalid_argument("lipschitz_quotient: x + B_1 leaves the box");
        num += std::abs(u[static_cast<std::size_t>(lat.site_index(shifted))] -
                        u[static_cast<std::size_t>(s)]);
    }
    num /= static_cast<double>(unit.size());
    rec.numerator = num / xabs;

    const double Rd = static_cast<double>(R);
    SiteField scaled_f = f;
    for (double& v : scaled_f) v *= Rd * Rd;
    rec.denominator = ball_mean_pow(lat, u, Coord{}, 2.0 * Rd, 2.0) / Rd +
                      ball_mean_pow(lat, scaled_f, Coord{}, 2.0 * Rd, p) / Rd;
    if (rec.denominator <= 0.0) {
        if (rec.numerator > 0.0)
            throw std::runtime_error("lipschitz_quotient: zero denominator with nonzero numerator");
        rec.quotient = 0.0;
        return rec;
    }
    rec.quotient = rec.numerator / rec.denominator;
    return rec;
}

SiteField make_rhs(const Lattice& lat, RhsFamily family, int R) {
    SiteField f(static_cast<std::size_t>(lat.nsites), 0.0);
    const double Rd = static_cast<double>(R);
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        double r2 = 0.0;
        for (int k = 0; k < lat.dim; ++k) {
            const double v = c[static_cast<std::size_t>(k)];
            r2 += v * v;
        }
        switch (family) {
        case RhsFamily::BumpOrigin: {
            const double s = Rd / 4.0;
            f[static_cast<std::size_t>(i)] = std::exp(-r2 / (2.0 * s * s));
            break;
        }
        case RhsFamily::BumpNearProbe: {
            const double s = Rd / 8.0;
            const double dx = c[0] - Rd / 2.0;
            double d2 = dx * dx;
            for (int k = 1; k < lat.dim; ++k) {
                const double v = c[static_cast<std::size_t>(k)];
                d2 += v * v;
            }
            f[static_cast<std::size_t>(i)] = std::exp(-d2 / (2.0 * s * s));
            break;
        }
        case RhsFamily::Oscillatory: {
            const double s = Rd / 2.0;
            f[static_cast<std::size_t>(i)] =
                std::cos(3.14159265358979323846 * c[0] / 4.0) * std::exp(-r2 / (2.0 * s * s));
            break;
        }
        }
    }
    return f;
}

LipschitzScanReport moment_boundedness_scan(const EnsembleSpec& ens, int dim,
                                            const std::vector<int>& R_list, double q, double p,
                                            int n_samples, std::uint64_t master_seed,
                                            const ProblemSpec& solver, int jobs) {
    validate(ens);
    if (R_list.empty()) throw std::invalid_argument("moment_boundedness_scan: empty R list");
    for (std::size_t i = 0; i < R_list.size(); ++i) {
        if (R_list[i] < 4) throw std::invalid_argument("moment_boundedness_scan: R must be >= 4");
        if (i > 0 && R_list[i] <= R_list[i - 1])
            throw std::invalid_argument("moment_boundedness_scan: R list must increase");
    }
    if (q < 1.0) throw std::invalid_argument("moment_boundedness_scan: q must be >= 1");
    if (p <= dim) throw std::invalid_argument("moment_boundedness_scan: p > d required");
    if (n_samples < 20) throw std::invalid_argument("moment_boundedness_scan: need N >= 20");
    if (jobs < 1) jobs = 1;

    LipschitzScanReport rep;
    rep.q = q;
    rep.p = p;
    rep.n_samples = n_samples;
    rep.R_list = R_list;

    constexpr int kProbes = 3;
    const RhsFamily families[3] = {RhsFamily::BumpOrigin, RhsFamily::BumpNearProbe,
                                   RhsFamily::Oscillatory};
    // quotients[R][probe][sample]
    std::vector<std::vector<std::vector<double>>> quotients(
        R_list.size(), std::vector<std::vector<double>>(
                           kProbes, std::vector<double>(static_cast<std::size_t>(n_samples))));

    for (std::size_t Ri = 0; Ri < R_list.size(); ++Ri) {
        const int R = R_list[Ri];
        const double mu = 0.25 / (static_cast<double>(R) * R);
        const Lattice lat = make_lattice(dim, 2 * R + 2, Boundary::Dirichlet);
        SiteField fs[3];
        for (int fi = 0; fi < 3; ++fi) fs[fi] = make_rhs(lat, families[fi], R);
        Coord probes[kProbes];
        const int pr[kProbes] = {std::max(3, R / 4), std::max(4, R / 2), R};
        for (int pi = 0; pi < kProbes; ++pi) {
            probes[pi] = Coord{};
            probes[pi][0] = pr[pi];
        }
        ProblemSpec ps = solver;
        ps.mu = mu;
        std::vector<std::string> errors(static_cast<std::size_t>(n_samples));
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (;;) {
                const int s = next.fetch_add(1);
                if (s >= n_samples) return;
                try {
                    const std::uint64_t seed =
                        child_seed(master_seed, static_cast<int>(Ri) * n_samples + s);
                    const CoefficientField A = sample(ens, lat, seed);
                    LinearOperator op(lat, A, mu);
                    double best[kProbes] = {0.0, 0.0, 0.0};
                    for (int fi = 0; fi < 3; ++fi) {
                        const SiteField u = solve(op, fs[fi], ps);
                        for (int pi = 0; pi < kProbes; ++pi) {
                            const LipschitzRecord r = lipschitz_quotient(
                                lat, A, mu, fs[fi], R, probes[pi], p, ps, &u);
                            best[pi] = std::max(best[pi], r.quotient);
                        }
                    }
                    for (int pi = 0; pi < kProbes; ++pi)
                        quotients[Ri][static_cast<std::size_t>(pi)]
                                 [static_cast<std::size_t>(s)] = best[pi];
                } catch (const std::exception& e) {
                    errors[static_cast<std::size_t>(s)] =
                        "R " + std::to_string(R) + " sample " + std::to_string(s) + ": " +
                        e.what();
                }
            }
        };
        if (jobs == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        for (const auto& msg : errors)
            if (!msg.empty()) throw std::runtime_error("moment_boundedness_scan: " + msg);

        for (int pi = 0; pi < kProbes; ++pi) {
            LipschitzScanRow row;
            row.R = R;
            row.probe_class = pi;
            row.probe = probes[pi];
            row.moment = moment_q(quotients[Ri][static_cast<std::size_t>(pi)], q);
            row.ci = bootstrap_moment_ci(
                quotients[Ri][static_cast<std::size_t>(pi)], q, 400,
                child_seed(master_seed ^ 0x6c697073636e0000ull,
                           static_cast<int>(Ri) * kProbes + pi));
            rep.rows.push_back(row);
        }
    }

    for (int pi = 0; pi < kProbes; ++pi) {
        double first = 0.0, last = 0.0, mn = 0.0, mx = 0.0;
        for (std::size_t Ri = 0; Ri < R_list.size(); ++Ri) {
            const double m = rep.rows[Ri * kProbes + static_cast<std::size_t>(pi)].moment;
            if (Ri == 0) {
                first = mn = mx = m;
            } else {
                mn = std::min(mn, m);
                mx = std::max(mx, m);
            }
            last = m;
        }
        rep.end_over_start.push_back(last / first);
        rep.spread.push_back(mx / mn);
        rep.max_spread = std::max(rep.max_spread, mx / mn);
    }
    return rep;
}

BoundednessReport local_boundedness_check(const EnsembleSpec& ens, int dim, int scale, double q,
                                          int n_samples, std::uint64_t master_seed,
                                          BoundednessMode mode, const ProblemSpec& solver,
                                          int jobs) {
    validate(ens);
    if (scale < 2) throw std::invalid_argument("local_boundedness_check: scale must be >= 2");
    if (q <= dim / 2.0)
        throw std::invalid_argument("local_boundedness_check: q > d/2 required, got q = " +
                                    std::to_string(q));
    if (n_samples < 2) throw std::invalid_argument("local_boundedness_check: need N >= 2");
    if (jobs < 1) jobs = 1;

    const Lattice lat = make_lattice(dim, 2 * scale + 3, Boundary::Dirichlet);
    const double mu = 0.25 / (static_cast<double>(scale) * scale);
    SiteField f(static_cast<std::size_t>(lat.nsites), 0.0);
    const double two_s = 2.0 * scale;
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        double r2 = 0.0;
        for (int k = 0; k < dim; ++k) {
            const double v = c[static_cast<std::size_t>(k)];
            r2 += v * v;
        }
        if (mode == BoundednessMode::RingSource) {
            const double r = std::sqrt(r2);
            if (r > two_s + 0.5 && r <= two_s + 2.5) f[static_cast<std::size_t>(i)] = 1.0;
        } else {
            const double s = scale / 2.0;
            f[static_cast<std::size_t>(i)] = std::exp(-r2 / (2.0 * s * s));
        }
    }

    ProblemSpec ps = solver;
    ps.mu = mu;
    BoundednessReport rep;
    rep.scale = scale;
    rep.q = q;
    rep.n_samples = n_samples;
    rep.constants.assign(static_cast<std::size_t>(n_samples), 0.0);
    std::vector<std::string> errors(static_cast<std::size_t>(n_samples));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= n_samples) return;
            try {
                const CoefficientField A = sample(ens, lat, child_seed(master_seed, s));
                LinearOperator op(lat, A, mu);
                const SiteField u = solve(op, f, ps);
                double sup = 0.0;
                for (const auto si : ball_sites(lat, Coord{}, static_cast<double>(scale)))
                    sup = std::max(sup, std::abs(u[static_cast<std::size_t>(si)]));
                const double den = ball_mean_pow(lat, u, Coord{}, two_s, 2.0) +
                                   ball_mean_pow(lat, f, Coord{}, two_s, q);
                if (den <= 0.0)
                    throw std::runtime_error("degenerate denominator in boundedness check");
                rep.constants[static_cast<std::size_t>(s)] = sup / den;
            } catch (const std::exception& e) {
                errors[static_cast<std::size_t>(s)] =
                    "sample " + std::to_string(s) + ": " + e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& msg : errors)
        if (!msg.empty()) throw std::runtime_error("local_boundedness_check: " + msg);

    rep.min_c = rep.max_c = rep.constants[0];
    for (const double c : rep.constants) {
        rep.min_c = std::min(rep.min_c, c);
        rep.max_c = std::max(rep.max_c, c);
    }
    rep.stability = rep.min_c > 0.0 ? rep.max_c / rep.min_c : 0.0;
    return rep;
}

} // namespace homlab
