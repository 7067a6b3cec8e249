#include "homlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "homlab/green.hpp"
#include "homlab/regularity.hpp"
#include "homlab/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace homlab {

namespace {

constexpr std::uint64_t kGapBatchSalt = 0x6761706261746368ull;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

// filename-safe tag for a q value: 4/3 -> 1p33333
std::string qtag(double q) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", q);
    std::string s = buf;
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + p.string() + " for writing");
    out << content;
    out.flush();
    if (!out) throw std::runtime_error("short write to " + p.string());
}

std::string read_file(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string plot_content(const std::string& id, const std::string& name,
                         const std::vector<std::array<double, 4>>& rows) {
    std::string s = "# schema=plot.v1 manifest=" + id + " name=" + name + "\n";
    s += "# x y ci_lo ci_hi\n";
    for (const auto& r : rows)
        s += fmt(r[0]) + " " + fmt(r[1]) + " " + fmt(r[2]) + " " + fmt(r[3]) + "\n";
    return s;
}

SiteField cli_rhs(const Lattice& lat, const std::string& kind) {
    SiteField f(static_cast<std::size_t>(lat.nsites), 0.0);
    if (kind == "delta") {
        f[static_cast<std::size_t>(lat.site_index(Coord{}))] = 1.0;
    } else if (kind == "constant") {
        std::fill(f.begin(), f.end(), 1.0);
    } else { // bump
        const double sigma = lat.radius > 0 ? lat.radius / 3.0 : 1.0;
        for (std::int64_t i = 0; i < lat.nsites; ++i) {
            const Coord c = lat.site_coord(i);
            double r2 = 0.0;
            for (int k = 0; k < lat.dim; ++k) r2 += static_cast<double>(c[k]) * c[k];
            f[static_cast<std::size_t>(i)] = std::exp(-r2 / (2.0 * sigma * sigma));
        }
    }
    return f;
}

int sensitivity_box(const ExperimentConfig& cfg) {
    if (cfg.box_radius > 0) return cfg.box_radius;
    int maxc = 0;
    double maxd = 0.0;
    for (const auto& [x, z] : cfg.pairs) {
        double d2 = 0.0;
        for (int k = 0; k < cfg.dim; ++k) {
            maxc = std::max({maxc, std::abs(x[k]), std::abs(z[k])});
            const double d = static_cast<double>(x[k]) - z[k];
            d2 += d * d;
        }
        maxd = std::max(maxd, std::sqrt(d2));
    }
    // room for the 9-ell gradient ball around z plus decay margin
    return std::max(choose_box_radius(cfg.mu, static_cast<int>(std::ceil(maxd))), maxc + 10);
}

bool has_q(const std::vector<double>& qs, double q) {
    for (double v : qs)
        if (std::abs(v - q) < 1e-12) return true;
    return false;
}

struct Artifacts {
    std::string csv;
    json fits = json::object();
    std::vector<std::pair<std::string, std::string>> plots;
    std::map<std::string, double> stats;
};

json fit_json(const ScalingFit& sf) {
    return json{{"q", sf.q},
                {"exponent", sf.exponent},
                {"intercept", sf.intercept},
                {"r2", sf.r_squared},
                {"c_hat", sf.c_hat}};
}

json line_json(const LineFit& lf) {
    return json{{"slope", lf.slope}, {"intercept", lf.intercept}, {"r2", lf.r2}};
}

const char* rate_name(RateHandling r) {
    switch (r) {
    case RateHandling::Zero: return "zero";
    case RateHandling::Pinned: return "pinned";
    case RateHandling::Joint: return "joint";
    }
    return "pinned";
}

Artifacts run_annealed(const ExperimentConfig& cfg, const std::string& id) {
    const MomentTable t = estimate_moments(cfg.ensemble, cfg.dim, cfg.mu, cfg.radii, cfg.q_list,
                                           cfg.samples, cfg.master_seed, cfg.solver, cfg.jobs);
    Artifacts art;

    std::string csv = "# schema=annealed_moments.v1 manifest=" + id + "\n";
    csv += "probe,radius,q,moment,ci_lo,ci_hi,n\n";
    const auto emit = [&](const char* probe, const std::vector<std::vector<MomentCell>>& tab) {
        for (std::size_t ri = 0; ri < t.radii.size(); ++ri)
            for (std::size_t qi = 0; qi < t.q_list.size(); ++qi) {
                const MomentCell& c = tab[ri][qi];
                csv += std::string(probe) + "," + std::to_string(t.radii[ri]) + "," +
                       fmt(t.q_list[qi]) + "," + fmt(c.moment) + "," + fmt(c.ci_lo) + "," +
                       fmt(c.ci_hi) + "," + std::to_string(t.n_samples) + "\n";
            }
    };
    emit("grad", t.grad);
    emit("mixed", t.mixed);
    art.csv = csv;

    art.fits["rate_handling"] = rate_name(cfg.rate_handling);
    art.fits["box_radius"] = t.box_radius;
    const double grad_target = -(cfg.dim - 1.0);
    const double mixed_target = -static_cast<double>(cfg.dim);

    json per_q = json::object();
    for (const ProbeKind which : {ProbeKind::Grad, ProbeKind::Mixed}) {
        const bool grad = which == ProbeKind::Grad;
        const double target = grad ? grad_target : mixed_target;
        json arr = json::array();
        double ref = 0.0, span = 0.0;
        const double ref_q = grad ? 2.0 : 1.0;
        const bool have_ref = has_q(t.q_list, ref_q);
        if (have_ref) ref = fit_with_rate(t, ref_q, which, cfg.rate_handling, target).exponent;
        for (const double q : t.q_list) {
            const ScalingFit sf = fit_with_rate(t, q, which, cfg.rate_handling, target);
            arr.push_back(fit_json(sf));
            if (have_ref) span = std::max(span, std::abs(sf.exponent - ref));
        }
        per_q[grad ? "grad" : "mixed"] = arr;
        if (have_ref) art.stats[grad ? "grad_exponent_span" : "mixed_exponent_span"] = span;
    }
    art.fits["per_q"] = per_q;

    if (has_q(t.q_list, 2.0) && has_q(t.q_list, 1.0)) {
        const DdReport dd = dd_moment_check(t, cfg.rate_handling);
        art.fits["decay"] = json{{"grad", fit_json(dd.grad_fit)},
                                 {"mixed", fit_json(dd.mixed_fit)},
                                 {"grad_target", dd.grad_target},
                                 {"mixed_target", dd.mixed_target},
                                 {"grad_pass", dd.grad_pass},
                                 {"mixed_pass", dd.mixed_pass}};
        art.stats["grad_exponent"] = dd.grad_fit.exponent;
        art.stats["mixed_exponent"] = dd.mixed_fit.exponent;
        art.stats["grad_r2"] = dd.grad_fit.r_squared;
        art.stats["mixed_r2"] = dd.mixed_fit.r_squared;
        art.stats["grad_rate"] = dd.grad_fit.c_hat;
        art.stats["mixed_rate"] = dd.mixed_fit.c_hat;
    }

    const double q_lo = has_q(t.q_list, 2.0) ? 2.0 : t.q_list.front();
    const double q_hi = t.q_list.back();
    if (q_hi > q_lo + 1e-12) {
        const FlatnessReport fl = high_moment_flatness(t, q_lo, q_hi);
        art.fits["flatness"] = json{{"q_lo", fl.q_lo},
                                    {"q_hi", fl.q_hi},
                                    {"grad_ratio", fl.grad_ratio},
                                    {"mixed_ratio", fl.mixed_ratio},
                                    {"grad_end_over_start", fl.grad_end_over_start},
                                    {"mixed_end_over_start", fl.mixed_end_over_start}};
        art.stats["flatness_grad_end"] = fl.grad_end_over_start;
        art.stats["flatness_mixed_end"] = fl.mixed_end_over_start;
        art.stats["flatness_end_max"] =
            std::max(fl.grad_end_over_start, fl.mixed_end_over_start);
    }

    const WeightedSupReport ws = weighted_sup_moment(t, cfg.beta, 1.0);
    art.fits["weighted_sup"] = json{{"beta", ws.beta},
                                    {"q", ws.q},
                                    {"grad_full", ws.grad_full},
                                    {"grad_prefix", ws.grad_prefix},
                                    {"grad_rel_change", ws.grad_rel_change},
                                    {"mixed_full", ws.mixed_full},
                                    {"mixed_prefix", ws.mixed_prefix},
                                    {"mixed_rel_change", ws.mixed_rel_change}};
    art.stats["sup_grad_change"] = ws.grad_rel_change;
    art.stats["sup_mixed_change"] = ws.mixed_rel_change;

    for (const ProbeKind which : {ProbeKind::Grad, ProbeKind::Mixed}) {
        const bool grad = which == ProbeKind::Grad;
        const auto& tab = grad ? t.grad : t.mixed;
        for (std::size_t qi = 0; qi < t.q_list.size(); ++qi) {
            std::vector<std::array<double, 4>> rows;
            for (std::size_t ri = 0; ri < t.radii.size(); ++ri)
                rows.push_back({static_cast<double>(t.radii[ri]), tab[ri][qi].moment,
                                tab[ri][qi].ci_lo, tab[ri][qi].ci_hi});
            const std::string name =
                std::string("plot_") + (grad ? "grad" : "mixed") + "_q" + qtag(t.q_list[qi]);
            art.plots.emplace_back(name + ".dat", plot_content(id, name, rows));
        }
    }
    return art;
}

Artifacts run_bounds(const ExperimentConfig& cfg, const std::string& id) {
    const int maxr = cfg.radii.back();
    const int box = cfg.box_radius > 0 ? cfg.box_radius : choose_box_radius(cfg.mu, maxr);
    const Lattice lat = make_lattice(cfg.dim, box, Boundary::Dirichlet);

    Artifacts art;
    std::string csv = "# schema=deterministic_bounds.v1 manifest=" + id + "\n";
    csv += "sample,point_C,point_c,point_r2,annulus_C,annulus_c,annulus_r2\n";

    const std::size_t nr = cfg.radii.size();
    std::vector<double> pmean(nr, 0.0), pmin(nr, 0.0), pmax(nr, 0.0);
    std::vector<double> amean(nr, 0.0), amin(nr, 0.0), amax(nr, 0.0);
    std::vector<double> pc, ac, pr2, ar2;
    for (int s = 0; s < cfg.samples; ++s) {
        const CoefficientField A = sample(cfg.ensemble, lat, child_seed(cfg.master_seed, s));
        const DecayBoundReport rep =
            check_deterministic_bounds(lat, A, cfg.mu, cfg.radii, cfg.solver);
        csv += std::to_string(s) + "," + fmt(rep.point_C) + "," + fmt(rep.point_c) + "," +
               fmt(rep.point_r2) + "," + fmt(rep.annulus_C) + "," + fmt(rep.annulus_c) + "," +
               fmt(rep.annulus_r2) + "\n";
        pc.push_back(rep.point_c);
        ac.push_back(rep.annulus_c);
        pr2.push_back(rep.point_r2);
        ar2.push_back(rep.annulus_r2);
        for (std::size_t ri = 0; ri < nr; ++ri) {
            const double pv = rep.point_vals[ri], av = rep.annulus_vals[ri];
            pmean[ri] += pv / cfg.samples;
            amean[ri] += av / cfg.samples;
            pmin[ri] = s == 0 ? pv : std::min(pmin[ri], pv);
            pmax[ri] = s == 0 ? pv : std::max(pmax[ri], pv);
            amin[ri] = s == 0 ? av : std::min(amin[ri], av);
            amax[ri] = s == 0 ? av : std::max(amax[ri], av);
        }
    }
    art.csv = csv;

    const auto mn = [](const std::vector<double>& v) { return *std::min_element(v.begin(), v.end()); };
    art.fits["box_radius"] = box;
    art.fits["point_rate"] = json{{"mean", mean(pc)}, {"min", mn(pc)}};
    art.fits["annulus_rate"] = json{{"mean", mean(ac)}, {"min", mn(ac)}};
    art.fits["point_r2_min"] = mn(pr2);
    art.fits["annulus_r2_min"] = mn(ar2);
    art.stats["point_rate_mean"] = mean(pc);
    art.stats["point_rate_min"] = mn(pc);
    art.stats["annulus_rate_mean"] = mean(ac);
    art.stats["annulus_rate_min"] = mn(ac);
    art.stats["point_r2_min"] = mn(pr2);
    art.stats["annulus_r2_min"] = mn(ar2);

    std::vector<std::array<double, 4>> prows, arows;
    for (std::size_t ri = 0; ri < nr; ++ri) {
        prows.push_back({static_cast<double>(cfg.radii[ri]), pmean[ri], pmin[ri], pmax[ri]});
        arows.push_back({static_cast<double>(cfg.radii[ri]), amean[ri], amin[ri], amax[ri]});
    }
    art.plots.emplace_back("plot_point.dat", plot_content(id, "plot_point", prows));
    art.plots.emplace_back("plot_annulus.dat", plot_content(id, "plot_annulus", arows));
    return art;
}

Artifacts run_sensitivity(const ExperimentConfig& cfg, const std::string& id) {
    const int box = sensitivity_box(cfg);
    const Lattice lat = make_lattice(cfg.dim, box, Boundary::Dirichlet);
    const SiteField f = cli_rhs(lat, cfg.rhs_kind);

    std::vector<SensitivityRecord> recs;
    const SensitivitySummary sum = sensitivity_bound_experiment(
        lat, cfg.ensemble, cfg.mu, f, cfg.pairs, cfg.samples, cfg.master_seed, cfg.solver,
        cfg.n_random_patches, cfg.lambda2, cfg.jobs, &recs);

    Artifacts art;
    std::string csv = "# schema=sensitivity.v1 manifest=" + id + "\n";
    csv += "sample,x0,x1,x2,z0,z1,z2,dist,branch,osc,kernel,ratio\n";
    std::vector<std::array<double, 4>> rows;
    for (const SensitivityRecord& r : recs) {
        csv += std::to_string(r.sample) + "," + std::to_string(r.x[0]) + "," +
               std::to_string(r.x[1]) + "," + std::to_string(r.x[2]) + "," +
               std::to_string(r.z[0]) + "," + std::to_string(r.z[1]) + "," +
               std::to_string(r.z[2]) + "," + fmt(r.dist) + "," + (r.far ? "far" : "near") + "," +
               fmt(r.osc) + "," + fmt(r.kernel) + "," + fmt(r.ratio) + "\n";
        rows.push_back({r.dist, r.ratio, r.ratio, r.ratio});
    }
    art.csv = csv;

    const double p99_over_median =
        sum.median_ratio > 0.0 ? sum.p99_ratio / sum.median_ratio : 0.0;
    art.fits["box_radius"] = box;
    art.fits["lambda2"] = cfg.lambda2;
    art.fits["n_records"] = sum.n_records;
    art.fits["n_far"] = sum.n_far;
    art.fits["n_near"] = sum.n_near;
    art.fits["median_ratio"] = sum.median_ratio;
    art.fits["p99_ratio"] = sum.p99_ratio;
    art.fits["max_ratio"] = sum.max_ratio;
    art.fits["p99_over_median"] = p99_over_median;
    art.stats["median_ratio"] = sum.median_ratio;
    art.stats["p99_ratio"] = sum.p99_ratio;
    art.stats["max_ratio"] = sum.max_ratio;
    art.stats["p99_over_median"] = p99_over_median;
    art.stats["far_fraction"] =
        sum.n_records > 0 ? static_cast<double>(sum.n_far) / sum.n_records : 0.0;

    art.plots.emplace_back("plot_ratio_vs_dist.dat",
                           plot_content(id, "plot_ratio_vs_dist", rows));
    return art;
}

Artifacts run_gap(const ExperimentConfig& cfg, const std::string& id) {
    const Lattice lat = make_lattice(cfg.dim, cfg.box_radius, Boundary::Dirichlet);
    const SiteField f = cli_rhs(lat, cfg.rhs_kind);

    Artifacts art;
    std::string csv = "# schema=spectral_gap.v1 manifest=" + id + "\n";
    csv += "batch,n,var,var_se,osc_sq_sum,ratio,ratio_se,grid_sites\n";

    const bool analytic = cfg.functional.kind == GapFunctional::Kind::SingleEdge &&
                          cfg.ensemble.kind == EnsembleSpec::Kind::Checkerboard;
    const double target = analytic ? cfg.ensemble.p_hi * (1.0 - cfg.ensemble.p_hi) : 0.0;

    json batches = json::array();
    std::vector<std::array<double, 4>> rows;
    double rmin = 0.0, rmax = 0.0, abs_z_max = 0.0;
    for (int b = 0; b < cfg.n_batches; ++b) {
        const std::uint64_t mb = child_seed(cfg.master_seed ^ kGapBatchSalt, b);
        const GapCheckResult g =
            spectral_gap_check(lat, cfg.ensemble, cfg.functional, cfg.mu, f, cfg.samples, mb,
                               cfg.solver, cfg.n_random_patches, cfg.jobs);
        csv += std::to_string(b) + "," + std::to_string(g.n_samples) + "," + fmt(g.var) + "," +
               fmt(g.var_se) + "," + fmt(g.osc_sq_sum_mean) + "," + fmt(g.ratio) + "," +
               fmt(g.ratio_se) + "," + std::to_string(g.grid_sites) + "\n";
        json bj{{"batch", b},          {"var", g.var},
                {"var_se", g.var_se},  {"osc_sq_sum", g.osc_sq_sum_mean},
                {"ratio", g.ratio},    {"ratio_se", g.ratio_se},
                {"grid_sites", g.grid_sites}};
        if (analytic && g.ratio_se > 0.0) {
            const double z = (g.ratio - target) / g.ratio_se;
            bj["z_vs_target"] = z;
            abs_z_max = std::max(abs_z_max, std::abs(z));
        }
        batches.push_back(bj);
        rows.push_back({static_cast<double>(b), g.ratio, g.ratio - g.ratio_se,
                        g.ratio + g.ratio_se});
        rmin = b == 0 ? g.ratio : std::min(rmin, g.ratio);
        rmax = b == 0 ? g.ratio : std::max(rmax, g.ratio);
    }
    art.csv = csv;

    art.fits["batches"] = batches;
    art.fits["ratio_min"] = rmin;
    art.fits["ratio_max"] = rmax;
    const double spread = rmin > 0.0 ? rmax / rmin : (rmax == 0.0 ? 1.0 : 0.0);
    art.fits["batch_spread"] = spread;
    art.stats["ratio_first"] = rows.empty() ? 0.0 : rows.front()[1];
    art.stats["ratio_min"] = rmin;
    art.stats["ratio_max"] = rmax;
    art.stats["batch_spread"] = spread;
    if (analytic) {
        art.fits["target_ratio"] = target;
        art.fits["target_abs_z_max"] = abs_z_max;
        art.stats["target_abs_z_max"] = abs_z_max;
    }
    art.plots.emplace_back("plot_ratio.dat", plot_content(id, "plot_ratio", rows));
    return art;
}

Artifacts run_fluct(const ExperimentConfig& cfg, const std::string& id, bool strong) {
    FluctuationConfig fc = cfg.fluct;
    fc.jobs = cfg.jobs;
    const FluctuationResult res = strong ? strong_fluctuation_experiment(fc, cfg.master_seed)
                                         : weak_fluctuation_experiment(fc, cfg.master_seed);

    Artifacts art;
    std::string csv = "# schema=";
    csv += (strong ? "strong_fluct" : "weak_fluct");
    csv += ".v1 manifest=" + id + "\n";
    csv += "n,side,eps,mu_n,stat_raw,stat,deflator,ci_lo,ci_hi\n";
    std::vector<std::array<double, 4>> rows, raw_rows;
    for (const FluctuationRow& r : res.rows) {
        csv += std::to_string(r.n) + "," + std::to_string(r.side) + "," + fmt(r.eps) + "," +
               fmt(r.mu_n) + "," + fmt(r.stat_raw) + "," + fmt(r.stat) + "," + fmt(r.deflator) +
               "," + fmt(r.ci.lo) + "," + fmt(r.ci.hi) + "\n";
        rows.push_back({r.eps, r.stat, r.ci.lo, r.ci.hi});
        raw_rows.push_back({r.eps, r.stat_raw, r.stat_raw, r.stat_raw});
    }
    art.csv = csv;

    art.fits["degenerate"] = res.degenerate;
    art.fits["bias_corrected"] = res.bias_corrected;
    art.fits["slope_target"] = res.slope_target;
    art.fits["fit"] = line_json(res.fit);
    art.fits["fit_raw"] = line_json(res.fit_raw);
    art.fits["f_mixed_norm"] = res.f_mixed_norm;
    art.fits["p"] = res.p;
    art.fits["theta"] = res.theta;
    art.stats["slope"] = res.fit.slope;
    art.stats["slope_raw"] = res.fit_raw.slope;
    art.stats["r2"] = res.fit.r2;
    art.stats["slope_err"] = std::abs(res.fit.slope - res.slope_target);
    art.stats["degenerate"] = res.degenerate ? 1.0 : 0.0;

    art.plots.emplace_back("plot_stat.dat", plot_content(id, "plot_stat", rows));
    art.plots.emplace_back("plot_stat_raw.dat", plot_content(id, "plot_stat_raw", raw_rows));
    return art;
}

Artifacts run_lipschitz(const ExperimentConfig& cfg, const std::string& id) {
    const LipschitzScanReport rep =
        moment_boundedness_scan(cfg.ensemble, cfg.dim, cfg.R_list, cfg.q_exp, cfg.p_exp,
                                cfg.samples, cfg.master_seed, cfg.solver, cfg.jobs);

    Artifacts art;
    std::string csv = "# schema=lipschitz_scan.v1 manifest=" + id + "\n";
    csv += "R,probe_class,probe_x,moment,ci_lo,ci_hi\n";
    std::array<std::vector<std::array<double, 4>>, 3> class_rows;
    double moment_max = 0.0;
    for (const LipschitzScanRow& r : rep.rows) {
        csv += std::to_string(r.R) + "," + std::to_string(r.probe_class) + "," +
               std::to_string(r.probe[0]) + "," + fmt(r.moment) + "," + fmt(r.ci.lo) + "," +
               fmt(r.ci.hi) + "\n";
        class_rows[static_cast<std::size_t>(r.probe_class)].push_back(
            {static_cast<double>(r.R), r.moment, r.ci.lo, r.ci.hi});
        moment_max = std::max(moment_max, r.moment);
    }
    art.csv = csv;

    art.fits["q"] = rep.q;
    art.fits["p"] = rep.p;
    art.fits["n_samples"] = rep.n_samples;
    art.fits["end_over_start"] = rep.end_over_start;
    art.fits["spread"] = rep.spread;
    art.fits["max_spread"] = rep.max_spread;
    double eos_max = 0.0;
    for (std::size_t c = 0; c < rep.end_over_start.size(); ++c) {
        art.stats["end_over_start_" + std::to_string(c)] = rep.end_over_start[c];
        eos_max = std::max(eos_max, rep.end_over_start[c]);
    }
    art.stats["end_over_start_max"] = eos_max;
    art.stats["spread_max"] = rep.max_spread;
    art.stats["moment_max"] = moment_max;

    for (std::size_t c = 0; c < class_rows.size(); ++c) {
        const std::string name = "plot_class" + std::to_string(c);
        art.plots.emplace_back(name + ".dat", plot_content(id, name, class_rows[c]));
    }
    return art;
}

Artifacts execute(const ExperimentConfig& cfg, const std::string& id) {
    switch (cfg.experiment) {
    case Experiment::AnnealedMoments: return run_annealed(cfg, id);
    case Experiment::DeterministicBounds: return run_bounds(cfg, id);
    case Experiment::Sensitivity: return run_sensitivity(cfg, id);
    case Experiment::SpectralGap: return run_gap(cfg, id);
    case Experiment::StrongFluct: return run_fluct(cfg, id, true);
    case Experiment::WeakFluct: return run_fluct(cfg, id, false);
    case Experiment::LipschitzScan: return run_lipschitz(cfg, id);
    }
    throw std::logic_error("execute: unhandled experiment kind");
}

} // namespace

void validate_bands(const ExperimentConfig& cfg) {
    const std::vector<std::string> ok = allowed_band_stats(cfg.experiment);
    for (const auto& [name, lim] : cfg.bands) {
        (void)lim;
        if (std::find(ok.begin(), ok.end(), name) == ok.end())
            throw ConfigError("/bands/" + name + ": not a statistic reported by " +
                              experiment_name(cfg.experiment));
    }
}

std::vector<std::string> allowed_band_stats(Experiment e) {
    switch (e) {
    case Experiment::AnnealedMoments:
        return {"grad_exponent",  "mixed_exponent",     "grad_r2",
                "mixed_r2",       "grad_rate",          "mixed_rate",
                "grad_exponent_span", "mixed_exponent_span", "flatness_grad_end",
                "flatness_mixed_end", "flatness_end_max",    "sup_grad_change",
                "sup_mixed_change"};
    case Experiment::DeterministicBounds:
        return {"point_rate_min",   "point_rate_mean", "annulus_rate_min",
                "annulus_rate_mean", "point_r2_min",   "annulus_r2_min"};
    case Experiment::Sensitivity:
        return {"median_ratio", "p99_ratio", "max_ratio", "p99_over_median", "far_fraction"};
    case Experiment::SpectralGap:
        return {"ratio_first", "ratio_min", "ratio_max", "batch_spread", "target_abs_z_max"};
    case Experiment::StrongFluct:
    case Experiment::WeakFluct:
        return {"slope", "slope_raw", "r2", "slope_err", "degenerate"};
    case Experiment::LipschitzScan:
        return {"end_over_start_max", "spread_max",       "moment_max",
                "end_over_start_0",   "end_over_start_1", "end_over_start_2"};
    }
    return {};
}

std::string resolve_output_root(const ExperimentConfig& cfg, const std::string& override_dir) {
    if (!override_dir.empty()) return override_dir;
    if (!cfg.output_dir.empty()) return cfg.output_dir;
    if (const char* env = std::getenv("HOMLAB_OUT_DIR"); env != nullptr && *env != '\0')
        return env;
    return ".";
}

std::vector<std::uint64_t> sample_seeds(const ExperimentConfig& cfg) {
    std::vector<std::uint64_t> seeds;
    switch (cfg.experiment) {
    case Experiment::AnnealedMoments:
    case Experiment::DeterministicBounds:
    case Experiment::Sensitivity:
        for (int s = 0; s < cfg.samples; ++s) seeds.push_back(child_seed(cfg.master_seed, s));
        break;
    case Experiment::SpectralGap:
        for (int b = 0; b < cfg.n_batches; ++b) {
            const std::uint64_t mb = child_seed(cfg.master_seed ^ kGapBatchSalt, b);
            for (int s = 0; s < cfg.samples; ++s) seeds.push_back(child_seed(mb, s));
        }
        break;
    case Experiment::StrongFluct:
    case Experiment::WeakFluct:
        for (std::size_t si = 0; si < cfg.fluct.sizes.size(); ++si)
            for (int s = 0; s < cfg.fluct.n_samples; ++s)
                seeds.push_back(child_seed(cfg.master_seed,
                                           si * static_cast<std::size_t>(cfg.fluct.n_samples) +
                                               static_cast<std::size_t>(s)));
        break;
    case Experiment::LipschitzScan:
        for (std::size_t ri = 0; ri < cfg.R_list.size(); ++ri)
            for (int s = 0; s < cfg.samples; ++s)
                seeds.push_back(child_seed(cfg.master_seed,
                                           ri * static_cast<std::size_t>(cfg.samples) +
                                               static_cast<std::size_t>(s)));
        break;
    }
    return seeds;
}

RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& out_override) {
    validate_bands(cfg);

    const std::string id = run_id(cfg);
    const fs::path dir = fs::path(resolve_output_root(cfg, out_override)) / id;
    fs::create_directories(dir);

    json manifest;
    manifest["schema"] = "run_manifest.v1";
    manifest["run_id"] = id;
    manifest["tool_version"] = kToolVersion;
    manifest["experiment"] = experiment_name(cfg.experiment);
    manifest["config"] = json::parse(canonical_text(cfg));
    manifest["jobs"] = cfg.jobs;
    manifest["sample_seeds"] = sample_seeds(cfg);
    manifest["wall_time_seconds"] = 0.0;
    manifest["completed"] = false;
    manifest["failures"] = json::array();
    manifest["artifacts"] = json::array();
    manifest["band_failures"] = json::array();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&t0] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    Artifacts art;
    try {
        art = execute(cfg, id);
    } catch (const std::exception& ex) {
        manifest["failures"].push_back(std::string(ex.what()));
        manifest["wall_time_seconds"] = elapsed();
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        throw;
    }

    RunOutcome out;
    json bands_json = json::object();
    for (const auto& [name, lim] : cfg.bands) {
        const auto it = art.stats.find(name);
        if (it == art.stats.end()) {
            const std::string msg =
                "band '" + name + "': this run produced no such statistic";
            manifest["failures"].push_back(msg);
            manifest["wall_time_seconds"] = elapsed();
            write_file(dir / "manifest.json", manifest.dump(2) + "\n");
            throw ConfigError(msg);
        }
        const double v = it->second;
        const bool pass = lim.size() == 1 ? v <= lim[0] : (v >= lim[0] && v <= lim[1]);
        bands_json[name] = json{{"value", v}, {"limits", lim}, {"pass", pass}};
        if (!pass) {
            char buf[192];
            if (lim.size() == 1)
                std::snprintf(buf, sizeof buf, "band %s: value %.6g exceeds limit %.6g",
                              name.c_str(), v, lim[0]);
            else
                std::snprintf(buf, sizeof buf, "band %s: value %.6g outside [%.6g, %.6g]",
                              name.c_str(), v, lim[0], lim[1]);
            out.band_failures.emplace_back(buf);
        }
    }
    art.fits["schema"] = std::string(experiment_name(cfg.experiment)) + "_fits.v1";
    art.fits["manifest"] = id;
    art.fits["stats"] = art.stats;
    art.fits["bands"] = bands_json;

    write_file(dir / "results.csv", art.csv);
    write_file(dir / "fits.json", art.fits.dump(2) + "\n");
    json names = json::array({"results.csv", "fits.json"});
    for (const auto& [name, content] : art.plots) {
        write_file(dir / name, content);
        names.push_back(name);
    }

    manifest["artifacts"] = names;
    manifest["completed"] = true;
    manifest["band_failures"] = out.band_failures;
    manifest["wall_time_seconds"] = elapsed();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    out.exit_code = out.band_failures.empty() ? 0 : 2;
    out.run_dir = dir.string();
    out.manifest_path = (dir / "manifest.json").string();
    return out;
}

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (const char c : s) {
        if (c == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

std::string schema_of(const std::vector<std::string>& lines, const std::string& which) {
    if (lines.empty() || lines[0].rfind("# schema=", 0) != 0)
        throw ConfigError("compare: " + which + " results.csv has no schema line");
    const std::string rest = lines[0].substr(9);
    return rest.substr(0, rest.find(' '));
}

} // namespace

CompareReport compare_runs(const std::string& manifest_a, const std::string& manifest_b) {
    const json ma = json::parse(read_file(manifest_a));
    const json mb = json::parse(read_file(manifest_b));
    const std::string ka = ma.at("experiment").get<std::string>();
    const std::string kb = mb.at("experiment").get<std::string>();
    if (ka != kb)
        throw ConfigError("compare: experiment kinds differ (" + ka + " vs " + kb + ")");

    CompareReport rep;
    rep.kind = ka;
    rep.run_a = ma.at("run_id").get<std::string>();
    rep.run_b = mb.at("run_id").get<std::string>();

    const fs::path da = fs::path(manifest_a).parent_path();
    const fs::path db = fs::path(manifest_b).parent_path();
    const std::string ca = read_file((da / "results.csv").string());
    const std::string cb = read_file((db / "results.csv").string());
    rep.identical = ca == cb;

    auto lines_of = [](const std::string& s) {
        std::vector<std::string> ls = split(s, '\n');
        while (!ls.empty() && ls.back().empty()) ls.pop_back();
        return ls;
    };
    const std::vector<std::string> la = lines_of(ca), lb = lines_of(cb);
    const std::string sa = schema_of(la, "first"), sb = schema_of(lb, "second");
    if (sa != sb) throw ConfigError("compare: result schemas differ (" + sa + " vs " + sb + ")");
    if (la.size() < 2 || lb.size() < 2) throw ConfigError("compare: results table is empty");
    if (la[1] != lb[1]) throw ConfigError("compare: result headers differ");
    if (la.size() != lb.size())
        throw ConfigError("compare: row counts differ (" + std::to_string(la.size() - 2) +
                          " vs " + std::to_string(lb.size() - 2) + ")");

    const std::vector<std::string> cols = split(la[1], ',');
    std::vector<double> col_max(cols.size(), 0.0);
    int ci_lo_idx = -1, ci_hi_idx = -1;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (cols[c] == "ci_lo") ci_lo_idx = static_cast<int>(c);
        if (cols[c] == "ci_hi") ci_hi_idx = static_cast<int>(c);
    }

    for (std::size_t row = 2; row < la.size(); ++row) {
        const std::vector<std::string> va = split(la[row], ',');
        const std::vector<std::string> vb = split(lb[row], ',');
        if (va.size() != cols.size() || vb.size() != cols.size())
            throw ConfigError("compare: malformed row " + std::to_string(row - 1));
        for (std::size_t c = 0; c < cols.size(); ++c) {
            double xa = 0.0, xb = 0.0;
            if (parse_double(va[c], xa) && parse_double(vb[c], xb)) {
                const double denom = std::max(std::abs(xa), std::abs(xb));
                const double rel = denom == 0.0 ? 0.0 : std::abs(xa - xb) / denom;
                col_max[c] = std::max(col_max[c], rel);
            } else if (va[c] != vb[c]) {
                throw ConfigError("compare: row " + std::to_string(row - 1) + " column " +
                                  cols[c] + " differs (" + va[c] + " vs " + vb[c] + ")");
            }
        }
        if (ci_lo_idx >= 0 && ci_hi_idx >= 0) {
            double alo, ahi, blo, bhi;
            if (parse_double(va[static_cast<std::size_t>(ci_lo_idx)], alo) &&
                parse_double(va[static_cast<std::size_t>(ci_hi_idx)], ahi) &&
                parse_double(vb[static_cast<std::size_t>(ci_lo_idx)], blo) &&
                parse_double(vb[static_cast<std::size_t>(ci_hi_idx)], bhi)) {
                ++rep.ci_rows;
                if (ahi < blo || bhi < alo) ++rep.ci_disjoint;
            }
        }
    }
    rep.rows = la.size() - 2;

    for (std::size_t c = 0; c < cols.size(); ++c) {
        if (col_max[c] > rep.max_rel_diff) {
            rep.max_rel_diff = col_max[c];
            rep.max_rel_column = cols[c];
        }
        char buf[128];
        std::snprintf(buf, sizeof buf, "column %s: max rel diff %.3e", cols[c].c_str(),
                      col_max[c]);
        rep.lines.emplace_back(buf);
    }
    if (ci_lo_idx >= 0) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "ci intervals: %d rows, %d disjoint", rep.ci_rows,
                      rep.ci_disjoint);
        rep.lines.emplace_back(buf);
    }
    return rep;
}

} // namespace homlab
