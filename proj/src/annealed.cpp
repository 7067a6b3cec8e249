#include "homlab/annealed.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "homlab/rng.hpp"

namespace homlab {

namespace {

std::size_t q_index(const MomentTable& table, double q) {
    for (std::size_t i = 0; i < table.q_list.size(); ++i)
        if (std::abs(table.q_list[i] - q) < 1e-12) return i;
    throw std::invalid_argument("moment table has no q = " + std::to_string(q));
}

const std::vector<std::vector<MomentCell>>& cells(const MomentTable& t, ProbeKind w) {
    return w == ProbeKind::Grad ? t.grad : t.mixed;
}

} // namespace

MomentTable estimate_moments(const EnsembleSpec& ens, int dim, double mu,
                             const std::vector<int>& radii, const std::vector<double>& q_list,
                             int n_samples, std::uint64_t master_seed, const ProblemSpec& solver,
                             int jobs) {
    validate(ens);
    if (mu <= 0.0) throw std::invalid_argument("estimate_moments: mu must be positive");
    if (radii.empty()) throw std::invalid_argument("estimate_moments: empty radius list");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (radii[i] < 3) throw std::invalid_argument("estimate_moments: radii must be >= 3");
        if (i > 0 && radii[i] <= radii[i - 1])
            throw std::invalid_argument("estimate_moments: radii must be strictly increasing");
    }
    if (q_list.empty()) throw std::invalid_argument("estimate_moments: empty q list");
    for (std::size_t i = 0; i < q_list.size(); ++i) {
        if (q_list[i] < 1.0) throw std::invalid_argument("estimate_moments: q must be >= 1");
        if (i > 0 && q_list[i] <= q_list[i - 1])
            throw std::invalid_argument("estimate_moments: q list must be strictly increasing");
    }
    if (n_samples < 50) throw std::invalid_argument("estimate_moments: need at least 50 samples");
    if (jobs < 1) jobs = 1;

    MomentTable table;
    table.dim = dim;
    table.mu = mu;
    table.radii = radii;
    table.q_list = q_list;
    table.n_samples = n_samples;
    table.master_seed = master_seed;
    table.ensemble = ens;
    table.box_radius = choose_box_radius(mu, radii.back());
    const Lattice lat = make_lattice(dim, table.box_radius, Boundary::Dirichlet);

    const std::size_t nr = radii.size();
    table.grad_raw.assign(static_cast<std::size_t>(n_samples), std::vector<double>(nr, 0.0));
    table.mixed_raw.assign(static_cast<std::size_t>(n_samples), std::vector<double>(nr, 0.0));

    ProblemSpec ps = solver;
    ps.mu = mu;

    std::vector<std::string> errors(static_cast<std::size_t>(n_samples));
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= n_samples) return;
            try {
                const CoefficientField A = sample(ens, lat, child_seed(master_seed, s));
                const GreenColumns cols = green_ball_columns(lat, A, mu, Coord{}, ps);
                const MixedDifferences md = make_mixed_differences(lat, cols);
                for (std::size_t ri = 0; ri < nr; ++ri) {
                    Coord x{};
                    x[0] = radii[ri];
                    table.grad_raw[static_cast<std::size_t>(s)][ri] =
                        local_avg_gradient(lat, cols.cols[0], x, Coord{}, 1.0);
                    table.mixed_raw[static_cast<std::size_t>(s)][ri] =
                        mixed_second_gradient(lat, md, x, 1.0);
                }
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
        if (!msg.empty()) throw std::runtime_error("estimate_moments: " + msg);

    const std::size_t nq = q_list.size();
    table.grad.assign(nr, std::vector<MomentCell>(nq));
    table.mixed.assign(nr, std::vector<MomentCell>(nq));
    std::vector<double> vals(static_cast<std::size_t>(n_samples));
    for (int which = 0; which < 2; ++which) {
        const auto& raw = which == 0 ? table.grad_raw : table.mixed_raw;
        auto& out = which == 0 ? table.grad : table.mixed;
        for (std::size_t ri = 0; ri < nr; ++ri) {
            for (std::size_t s = 0; s < static_cast<std::size_t>(n_samples); ++s)
                vals[s] = raw[s][ri];
            for (std::size_t qi = 0; qi < nq; ++qi) {
                MomentCell& cell = out[ri][qi];
                cell.moment = moment_q(vals, q_list[qi]);
                const std::uint64_t bseed = child_seed(
                    master_seed ^ 0x626f6f7473747261ull,
                    static_cast<int>((static_cast<std::size_t>(which) * nr + ri) * nq + qi));
                const BootstrapCI ci = bootstrap_moment_ci(vals, q_list[qi], 400, bseed);
                cell.ci_lo = ci.lo;
                cell.ci_hi = ci.hi;
            }
            for (std::size_t qi = 1; qi < nq; ++qi) {
                if (out[ri][qi].moment < out[ri][qi - 1].moment * (1.0 - 1e-10))
                    throw std::logic_error("estimate_moments: moment not nondecreasing in q");
            }
        }
    }
    return table;
}

ScalingFit fit_decay_exponent(const MomentTable& table, double q, ProbeKind which, double c_hat) {
    if (table.radii.size() < 3)
        throw std::invalid_argument("fit_decay_exponent: need at least 3 radii");
    if (c_hat < 0.0) throw std::invalid_argument("fit_decay_exponent: c_hat must be >= 0");
    const std::size_t qi = q_index(table, q);
    const auto& tab = cells(table, which);
    const double rmu = std::sqrt(table.mu);
    std::vector<double> xs, ys;
    for (std::size_t ri = 0; ri < table.radii.size(); ++ri) {
        const double r = static_cast<double>(table.radii[ri]);
        const double m = tab[ri][qi].moment;
        if (m <= 0.0) throw std::runtime_error("fit_decay_exponent: nonpositive moment");
        xs.push_back(std::log(r));
        ys.push_back(std::log(m) + c_hat * rmu * r);
    }
    const LineFit lf = fit_line(xs, ys);
    ScalingFit fit;
    fit.exponent = lf.slope;
    fit.intercept = lf.intercept;
    fit.r_squared = lf.r2;
    fit.c_hat = c_hat;
    fit.q = q;
    fit.which = which;
    return fit;
}

double pinned_rate_fit(const MomentTable& table, double q, ProbeKind which,
                       double target_exponent) {
    if (table.radii.size() < 2)
        throw std::invalid_argument("pinned_rate_fit: need at least 2 radii");
    const std::size_t qi = q_index(table, q);
    const auto& tab = cells(table, which);
    const double rmu = std::sqrt(table.mu);
    std::vector<double> xs, ys;
    for (std::size_t ri = 0; ri < table.radii.size(); ++ri) {
        const double r = static_cast<double>(table.radii[ri]);
        const double m = tab[ri][qi].moment;
        if (m <= 0.0) throw std::runtime_error("pinned_rate_fit: nonpositive moment");
        xs.push_back(-rmu * r);
        ys.push_back(std::log(m) - target_exponent * std::log(r));
    }
    const LineFit lf = fit_line(xs, ys);
    return lf.slope > 0.0 ? lf.slope : 0.0;
}

ScalingFit fit_with_rate(const MomentTable& table, double q, ProbeKind which, RateHandling rate,
                         double target) {
    double c_hat = 0.0;
    if (rate == RateHandling::Pinned) {
        c_hat = pinned_rate_fit(table, q, which, target);
    } else if (rate == RateHandling::Joint) {
        const std::size_t qi = q_index(table, q);
        const auto& tab = cells(table, which);
        const double rmu = std::sqrt(table.mu);
        std::vector<double> x1, x2, ys;
        for (std::size_t ri = 0; ri < table.radii.size(); ++ri) {
            const double r = static_cast<double>(table.radii[ri]);
            x1.push_back(-rmu * r);
            x2.push_back(std::log(r));
            ys.push_back(std::log(tab[ri][qi].moment));
        }
        const PlaneFit pf = fit_plane(x1, x2, ys);
        c_hat = pf.c1 > 0.0 ? pf.c1 : 0.0;
    }
    return fit_decay_exponent(table, q, which, c_hat);
}

DdReport dd_moment_check(const MomentTable& table, RateHandling rate, double grad_tolerance,
                         double mixed_tolerance) {
    DdReport rep;
    rep.rate = rate;
    rep.grad_target = -(table.dim - 1.0);
    rep.mixed_target = -static_cast<double>(table.dim);
    rep.grad_tolerance = grad_tolerance;
    rep.mixed_tolerance = mixed_tolerance;
    rep.grad_fit = fit_with_rate(table, 2.0, ProbeKind::Grad, rate, rep.grad_target);
    rep.mixed_fit = fit_with_rate(table, 1.0, ProbeKind::Mixed, rate, rep.mixed_target);
    rep.grad_pass = std::abs(rep.grad_fit.exponent - rep.grad_target) <= grad_tolerance;
    rep.mixed_pass = std::abs(rep.mixed_fit.exponent - rep.mixed_target) <= mixed_tolerance;
    return rep;
}

FlatnessReport high_moment_flatness(const MomentTable& table, double q_lo, double q_hi) {
    if (table.radii.size() < 2)
        throw std::invalid_argument("high_moment_flatness: need at least 2 radii");
    const std::size_t lo = q_index(table, q_lo);
    const std::size_t hi = q_index(table, q_hi);
    FlatnessReport rep;
    rep.q_lo = q_lo;
    rep.q_hi = q_hi;
    rep.radii = table.radii;
    for (std::size_t ri = 0; ri < table.radii.size(); ++ri) {
        const double gr = table.grad[ri][hi].moment / table.grad[ri][lo].moment;
        const double mr = table.mixed[ri][hi].moment / table.mixed[ri][lo].moment;
        rep.grad_ratio.push_back(gr);
        rep.mixed_ratio.push_back(mr);
        rep.grad_max_ratio = std::max(rep.grad_max_ratio, gr);
        rep.mixed_max_ratio = std::max(rep.mixed_max_ratio, mr);
    }
    rep.grad_end_over_start = rep.grad_ratio.back() / rep.grad_ratio.front();
    rep.mixed_end_over_start = rep.mixed_ratio.back() / rep.mixed_ratio.front();
    return rep;
}

WeightedSupReport weighted_sup_moment(const MomentTable& table, double beta, double q) {
    if (beta <= 0.0) throw std::invalid_argument("weighted_sup_moment: beta must be positive");
    if (q < 1.0) throw std::invalid_argument("weighted_sup_moment: q must be >= 1");
    if (table.radii.size() < 2)
        throw std::invalid_argument("weighted_sup_moment: need at least 2 radii");
    if (table.grad_raw.empty())
        throw std::invalid_argument("weighted_sup_moment: table has no raw samples");
    const std::size_t nr = table.radii.size();
    const std::size_t ns = table.grad_raw.size();
    const double d = static_cast<double>(table.dim);
    std::vector<double> sup_g_full(ns), sup_g_pre(ns), sup_m_full(ns), sup_m_pre(ns);
    for (std::size_t s = 0; s < ns; ++s) {
        double gf = 0.0, gp = 0.0, mf = 0.0, mp = 0.0;
        for (std::size_t ri = 0; ri < nr; ++ri) {
            const double r = static_cast<double>(table.radii[ri]);
            const double wg = std::pow(r, d - 1.0 - beta) * table.grad_raw[s][ri];
            const double wm = std::pow(r, d - beta) * table.mixed_raw[s][ri];
            gf = std::max(gf, wg);
            mf = std::max(mf, wm);
            if (ri + 1 < nr) {
                gp = std::max(gp, wg);
                mp = std::max(mp, wm);
            }
        }
        sup_g_full[s] = gf;
        sup_g_pre[s] = gp;
        sup_m_full[s] = mf;
        sup_m_pre[s] = mp;
    }
    WeightedSupReport rep;
    rep.beta = beta;
    rep.q = q;
    rep.grad_full = moment_q(sup_g_full, q);
    rep.grad_prefix = moment_q(sup_g_pre, q);
    rep.mixed_full = moment_q(sup_m_full, q);
    rep.mixed_prefix = moment_q(sup_m_pre, q);
    rep.grad_rel_change = std::abs(rep.grad_full - rep.grad_prefix) / rep.grad_prefix;
    rep.mixed_rel_change = std::abs(rep.mixed_full - rep.mixed_prefix) / rep.mixed_prefix;
    return rep;
}

} // namespace homlab
