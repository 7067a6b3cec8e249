#include "homlab/sensitivity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <thread>

#include "homlab/green.hpp"
#include "homlab/rng.hpp"
#include "homlab/stats.hpp"

namespace homlab {

std::vector<std::vector<double>> candidate_patches(const Lattice& lat, const CoefficientField& A,
                                                   const PerturbationSet& pert) {
    if (!lat.in_box(pert.z)) throw std::invalid_argument("candidate_patches: z outside box");
    if (pert.n_random < 0) throw std::invalid_argument("candidate_patches: n_random < 0");
    const std::int64_t zi = lat.site_index(pert.z);
    const std::size_t dim = static_cast<std::size_t>(lat.dim);
    std::vector<std::vector<double>> out;
    std::vector<double> cur(dim);
    for (std::size_t k = 0; k < dim; ++k)
        cur[k] = A.a[static_cast<std::size_t>(zi) * dim + k];
    out.push_back(cur);
    out.emplace_back(dim, A.lambda);
    out.emplace_back(dim, 1.0);
    Rng rng(pert.seed);
    for (int j = 0; j < pert.n_random; ++j) {
        std::vector<double> p(dim);
        for (std::size_t k = 0; k < dim; ++k) p[k] = rng.uniform(A.lambda, 1.0);
        out.push_back(std::move(p));
    }
    return out;
}

void apply_patch(const Lattice& lat, CoefficientField& A, const Coord& z,
                 const std::vector<double>& patch) {
    if (patch.size() != static_cast<std::size_t>(lat.dim))
        throw std::invalid_argument("apply_patch: patch size must equal dim");
    const std::int64_t zi = lat.site_index(z);
    for (std::size_t k = 0; k < patch.size(); ++k) {
        if (patch[k] < A.lambda - 1e-12 || patch[k] > 1.0 + 1e-12)
            throw std::invalid_argument("apply_patch: patch value outside [lambda, 1]");
        A.a[static_cast<std::size_t>(zi) * static_cast<std::size_t>(lat.dim) + k] = patch[k];
    }
}

namespace {

double ball_mean_abs_diff(const Lattice& lat, const SiteField& a, const SiteField& b,
                          const Coord& x, double L) {
    const auto ball = ball_sites(lat, x, L);
    double acc = 0.0;
    for (const auto s : ball)
        acc += std::abs(a[static_cast<std::size_t>(s)] - b[static_cast<std::size_t>(s)]);
    return acc / static_cast<double>(ball.size());
}

} // namespace

double oscillation(const Lattice& lat, const CoefficientField& A, double mu, const SiteField& f,
                   const Coord& x, const PerturbationSet& pert, const ProblemSpec& spec,
                   const SiteField* u_base) {
    ProblemSpec ps = spec;
    ps.mu = mu;
    SiteField base;
    if (u_base == nullptr) {
        LinearOperator op(lat, A, mu);
        base = solve(op, f, ps);
        u_base = &base;
    }
    const auto patches = candidate_patches(lat, A, pert);
    double osc = 0.0;
    CoefficientField tilde = A;
    for (std::size_t c = 1; c < patches.size(); ++c) { // index 0 = unperturbed, shift 0
        apply_patch(lat, tilde, pert.z, patches[c]);
        LinearOperator op(lat, tilde, mu);
        const SiteField ut = solve(op, f, ps);
        osc = std::max(osc, ball_mean_abs_diff(lat, *u_base, ut, x,
                                               static_cast<double>(pert.ell)));
    }
    return osc;
}

bool kernel_is_far(double dist, int ell) { return dist > 6.0 * ell; }

double kernel_K(const KernelInputs& in) {
    if (in.sample_id_u != in.sample_id_g)
        throw std::invalid_argument("kernel_K: gradient and Green inputs from different samples");
    if (kernel_is_far(in.dist, in.ell)) return in.green_grad * in.grad_u_ell;
    return in.f_norm + in.grad_u_9ell;
}

namespace {

double ball_norm(const Lattice& lat, const SiteField& f, const Coord& x, double L, double p) {
    const auto ball = ball_sites(lat, x, L);
    double acc = 0.0;
    for (const auto s : ball) acc += std::pow(std::abs(f[static_cast<std::size_t>(s)]), p);
    return std::pow(acc / static_cast<double>(ball.size()), 1.0 / p);
}

} // namespace

SensitivitySummary sensitivity_bound_experiment(
    const Lattice& lat, const EnsembleSpec& ens, double mu, const SiteField& f,
    const std::vector<std::pair<Coord, Coord>>& pairs, int n_samples, std::uint64_t master_seed,
    const ProblemSpec& spec, int n_random_patches, double lambda2, int jobs,
    std::vector<SensitivityRecord>* records) {
    validate(ens);
    if (pairs.empty()) throw std::invalid_argument("sensitivity_bound_experiment: no pairs");
    if (n_samples < 1) throw std::invalid_argument("sensitivity_bound_experiment: N < 1");
    if (lambda2 < 1.0)
        throw std::invalid_argument("sensitivity_bound_experiment: lambda2 must be >= 1");
    bool any_far = false, any_near = false;
    for (const auto& [x, z] : pairs) {
        if (!lat.in_box(x) || !lat.in_box(z))
            throw std::invalid_argument("sensitivity_bound_experiment: pair outside box");
        (kernel_is_far(std::sqrt(dist2(lat, x, z)), 1) ? any_far : any_near) = true;
    }
    if (!any_far || !any_near)
        throw std::invalid_argument(
            "sensitivity_bound_experiment: pairs must span both kernel branches");
    if (jobs < 1) jobs = 1;

    ProblemSpec ps = spec;
    ps.mu = mu;
    const std::size_t npairs = pairs.size();
    std::vector<SensitivityRecord> recs(static_cast<std::size_t>(n_samples) * npairs);
    std::vector<std::string> errors(static_cast<std::size_t>(n_samples));
    std::atomic<int> next{0};

    auto worker = [&]() {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= n_samples) return;
            try {
                const std::uint64_t seed = child_seed(master_seed, s);
                const CoefficientField A = sample(ens, lat, seed);
                LinearOperator op(lat, A, mu);
                const SiteField u = solve(op, f, ps);
                std::map<std::int64_t, SiteField> green_cols;
                for (std::size_t pi = 0; pi < npairs; ++pi) {
                    const Coord& x = pairs[pi].first;
                    const Coord& z = pairs[pi].second;
                    SensitivityRecord rec;
                    rec.sample = s;
                    rec.x = x;
                    rec.z = z;
                    rec.dist = std::sqrt(dist2(lat, x, z));
                    rec.far = kernel_is_far(rec.dist, 1);
                    PerturbationSet pert;
                    pert.z = z;
                    pert.n_random = n_random_patches;
                    pert.seed = child_seed(seed ^ 0x7061746368657321ull, static_cast<int>(pi));
                    rec.osc = oscillation(lat, A, mu, f, x, pert, ps, &u);
                    KernelInputs in;
                    in.dist = rec.dist;
                    in.ell = 1;
                    in.sample_id_u = seed;
                    in.sample_id_g = seed;
                    if (rec.far) {
                        const std::int64_t zi = lat.site_index(z);
                        auto it = green_cols.find(zi);
                        if (it == green_cols.end())
                            it = green_cols.emplace(zi, green_column(lat, A, mu, z, ps)).first;
                        in.green_grad = local_avg_gradient(lat, it->second, x, z, 2.0);
                        in.grad_u_ell = local_gradient_avg(lat, u, z, 1.0);
                    } else {
                        in.f_norm = ball_norm(lat, f, x, 2.0, lambda2);
                        in.grad_u_9ell = local_gradient_avg(lat, u, z, 9.0);
                    }
                    rec.kernel = kernel_K(in);
                    if (!(rec.kernel > 0.0))
                        throw std::runtime_error("sensitivity kernel vanished at a probe pair");
                    rec.ratio = rec.osc / rec.kernel;
                    recs[static_cast<std::size_t>(s) * npairs + pi] = rec;
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
        if (!msg.empty()) throw std::runtime_error("sensitivity_bound_experiment: " + msg);

    SensitivitySummary sum;
    sum.n_records = static_cast<int>(recs.size());
    std::vector<double> ratios;
    ratios.reserve(recs.size());
    for (const auto& r : recs) {
        (r.far ? sum.n_far : sum.n_near) += 1;
        ratios.push_back(r.ratio);
        sum.max_ratio = std::max(sum.max_ratio, r.ratio);
    }
    sum.median_ratio = percentile(ratios, 0.5);
    sum.p99_ratio = percentile(ratios, 0.99);
    if (records != nullptr) *records = std::move(recs);
    return sum;
}

namespace {

double eval_functional(const Lattice& lat, const CoefficientField& A, const SiteField* u,
                       const GapFunctional& zeta) {
    switch (zeta.kind) {
    case GapFunctional::Kind::SingleEdge: {
        const std::int64_t i = lat.site_index(zeta.site);
        return A.a[static_cast<std::size_t>(i) * static_cast<std::size_t>(lat.dim) +
                   static_cast<std::size_t>(zeta.axis)];
    }
    case GapFunctional::Kind::PointValue:
        return (*u)[static_cast<std::size_t>(lat.site_index(zeta.site))];
    case GapFunctional::Kind::BallAverage: {
        const auto ball = ball_sites(lat, zeta.site, zeta.ball_radius);
        double acc = 0.0;
        for (const auto s : ball) acc += (*u)[static_cast<std::size_t>(s)];
        return acc / static_cast<double>(ball.size());
    }
    }
    throw std::logic_error("eval_functional: unreachable");
}

} // namespace

GapCheckResult spectral_gap_check(const Lattice& lat, const EnsembleSpec& ens,
                                  const GapFunctional& zeta, double mu, const SiteField& f,
                                  int n_samples, std::uint64_t master_seed,
                                  const ProblemSpec& spec, int n_random_patches, int jobs) {
    validate(ens);
    if (n_samples < 2) throw std::invalid_argument("spectral_gap_check: need N >= 2");
    if (!lat.in_box(zeta.site)) throw std::invalid_argument("spectral_gap_check: site outside box");
    if (zeta.kind == GapFunctional::Kind::SingleEdge &&
        (zeta.axis < 0 || zeta.axis >= lat.dim))
        throw std::invalid_argument("spectral_gap_check: bad edge axis");
    if (jobs < 1) jobs = 1;
    const bool needs_u = zeta.kind != GapFunctional::Kind::SingleEdge;

    // covering grid: shells of equal squared distance from the functional site
    std::vector<std::pair<std::int64_t, std::int64_t>> order; // (dist2, site)
    order.reserve(static_cast<std::size_t>(lat.nsites));
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const double d2 = dist2(lat, lat.site_coord(i), zeta.site);
        order.emplace_back(static_cast<std::int64_t>(std::llround(d2)), i);
    }
    std::sort(order.begin(), order.end());

    ProblemSpec ps = spec;
    ps.mu = mu;
    std::vector<double> zeta_vals(static_cast<std::size_t>(n_samples), 0.0);
    std::vector<double> osc_sums(static_cast<std::size_t>(n_samples), 0.0);
    std::vector<int> grid_counts(static_cast<std::size_t>(n_samples), 0);
    std::vector<std::string> errors(static_cast<std::size_t>(n_samples));
    std::atomic<int> next{0};

    auto worker = [&]() {
        for (;;) {
            const int s = next.fetch_add(1);
            if (s >= n_samples) return;
            try {
                const std::uint64_t seed = child_seed(master_seed, s);
                const CoefficientField A = sample(ens, lat, seed);
                SiteField u;
                if (needs_u) {
                    LinearOperator op(lat, A, mu);
                    u = solve(op, f, ps);
                }
                zeta_vals[static_cast<std::size_t>(s)] =
                    eval_functional(lat, A, needs_u ? &u : nullptr, zeta);

                double total = 0.0;
                int visited = 0;
                std::size_t pos = 0;
                CoefficientField tilde = A;
                while (pos < order.size()) {
                    const std::int64_t shell_d2 = order[pos].first;
                    double shell_sum = 0.0;
                    while (pos < order.size() && order[pos].first == shell_d2) {
                        const Coord z = lat.site_coord(order[pos].second);
                        PerturbationSet pert;
                        pert.z = z;
                        pert.n_random = n_random_patches;
                        pert.seed = child_seed(seed ^ 0x73686c6c70657274ull,
                                               static_cast<int>(order[pos].second));
                        const auto patches = candidate_patches(lat, A, pert);
                        double zmax = zeta_vals[static_cast<std::size_t>(s)];
                        double zmin = zmax;
                        for (std::size_t c = 1; c < patches.size(); ++c) {
                            apply_patch(lat, tilde, z, patches[c]);
                            double v;
                            if (needs_u) {
                                LinearOperator op(lat, tilde, mu);
                                const SiteField ut = solve(op, f, ps);
                                v = eval_functional(lat, tilde, &ut, zeta);
                            } else {
                                v = eval_functional(lat, tilde, nullptr, zeta);
                            }
                            zmax = std::max(zmax, v);
                            zmin = std::min(zmin, v);
                        }
                        apply_patch(lat, tilde, z, patches[0]); // restore
                        const double osc = zmax - zmin;
                        shell_sum += osc * osc;
                        ++visited;
                        ++pos;
                    }
                    if (total > 0.0 && shell_sum < 1e-12 * total) {
                        total += shell_sum;
                        break;
                    }
                    total += shell_sum;
                }
                osc_sums[static_cast<std::size_t>(s)] = total;
                grid_counts[static_cast<std::size_t>(s)] = visited;
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
        if (!msg.empty()) throw std::runtime_error("spectral_gap_check: " + msg);

    GapCheckResult res;
    res.n_samples = n_samples;
    res.var = variance_unbiased(zeta_vals);
    const double m = mean(zeta_vals);
    double m4 = 0.0;
    for (const double v : zeta_vals) {
        const double d = v - m;
        m4 += d * d * d * d;
    }
    m4 /= static_cast<double>(n_samples);
    const double n = static_cast<double>(n_samples);
    const double var_of_var = (m4 - (n - 3.0) / (n - 1.0) * res.var * res.var) / n;
    res.var_se = var_of_var > 0.0 ? std::sqrt(var_of_var) : 0.0;
    res.osc_sq_sum_mean = mean(osc_sums);
    if (res.osc_sq_sum_mean > 0.0) {
        res.ratio = res.var / res.osc_sq_sum_mean;
        res.ratio_se = res.var_se / res.osc_sq_sum_mean;
    }
    for (const int c : grid_counts) res.grid_sites = std::max(res.grid_sites, c);
    return res;
}

} // namespace homlab
