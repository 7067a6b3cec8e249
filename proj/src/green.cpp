#include "homlab/green.hpp"

#include <cmath>
#include <stdexcept>

namespace homlab {

double grad_sq_site(const Lattice& lat, const SiteField& u, std::int64_t site) {
    double s = 0.0;
    for (int k = 0; k < lat.dim; ++k) {
        const std::int64_t jp = lat.nbr_plus[k][site];
        const std::int64_t jm = lat.nbr_minus[k][site];
        const double up = jp >= 0 ? u[static_cast<std::size_t>(jp)] : 0.0;
        const double um = jm >= 0 ? u[static_cast<std::size_t>(jm)] : 0.0;
        const double ui = u[static_cast<std::size_t>(site)];
        const double dp = up - ui;
        const double dm = ui - um;
        s += 0.5 * (dp * dp + dm * dm);
    }
    return s;
}

double local_gradient_avg(const Lattice& lat, const SiteField& u, const Coord& x, double L) {
    if (u.size() != static_cast<std::size_t>(lat.nsites))
        throw std::invalid_argument("local_gradient_avg: field size mismatch");
    const auto ball = ball_sites(lat, x, L);
    if (ball.empty()) throw std::invalid_argument("local_gradient_avg: empty ball");
    double acc = 0.0;
    for (const auto s : ball) acc += grad_sq_site(lat, u, s);
    return std::sqrt(acc / static_cast<double>(ball.size()));
}

namespace {

void require_separation(const Lattice& lat, const Coord& x, const Coord& y, double L,
                        const char* what) {
    const double d2 = dist2(lat, x, y);
    if (d2 < 9.0 * L * L - 1e-9)
        throw std::invalid_argument(std::string(what) +
                                    ": probe and source must satisfy |x - y| >= 3L");
}

} // namespace

double local_avg_gradient(const Lattice& lat, const SiteField& green_col, const Coord& x,
                          const Coord& y, double L) {
    require_separation(lat, x, y, L, "local_avg_gradient");
    return local_gradient_avg(lat, green_col, x, L);
}

GreenColumns green_ball_columns(const Lattice& lat, const CoefficientField& A, double mu,
                                const Coord& y, const ProblemSpec& spec) {
    GreenColumns out;
    out.y = y;
    out.dim = lat.dim;
    ProblemSpec ps = spec;
    ps.mu = mu;
    out.cols.push_back(green_column(lat, A, mu, y, ps));
    ++out.n_solves;
    for (int k = 0; k < lat.dim; ++k) {
        Coord yp = y, ym = y;
        yp[static_cast<std::size_t>(k)] += 1;
        ym[static_cast<std::size_t>(k)] -= 1;
        if (lat.boundary == Boundary::Periodic) {
            const int n = lat.side;
            auto wrap = [n](int v) {
                int m = (v + n / 2) % n;
                if (m < 0) m += n;
                return m - n / 2;
            };
            for (auto* c : {&yp, &ym})
                for (int kk = 0; kk < lat.dim; ++kk)
                    (*c)[static_cast<std::size_t>(kk)] = wrap((*c)[static_cast<std::size_t>(kk)]);
        }
        if (!lat.in_box(yp) || !lat.in_box(ym))
            throw std::invalid_argument(
                "green_ball_columns: source ball must lie inside the box");
        out.cols.push_back(green_column(lat, A, mu, yp, ps));
        ++out.n_solves;
        out.cols.push_back(green_column(lat, A, mu, ym, ps));
        ++out.n_solves;
    }
    return out;
}

MixedDifferences make_mixed_differences(const Lattice& lat, const GreenColumns& cols) {
    if (cols.dim != lat.dim || cols.cols.size() != static_cast<std::size_t>(2 * lat.dim + 1))
        throw std::invalid_argument("make_mixed_differences: need exactly 2*dim+1 columns");
    MixedDifferences md;
    md.y = cols.y;
    md.dim = lat.dim;
    const std::size_t n = cols.cols[0].size();
    for (int l = 0; l < lat.dim; ++l) {
        const SiteField& gc = cols.cols[0];
        const SiteField& gp = cols.cols[static_cast<std::size_t>(1 + 2 * l)];
        const SiteField& gm = cols.cols[static_cast<std::size_t>(2 + 2 * l)];
        SiteField ha(n), hb(n);
        for (std::size_t i = 0; i < n; ++i) {
            ha[i] = gp[i] - gc[i]; // spoke edge (y, l)
            hb[i] = gc[i] - gm[i]; // spoke edge (y - e_l, l)
        }
        md.diffs.push_back(std::move(ha));
        md.diffs.push_back(std::move(hb));
    }
    return md;
}

double mixed_second_gradient(const Lattice& lat, const MixedDifferences& md, const Coord& x,
                             double L) {
    if (md.diffs.size() != static_cast<std::size_t>(2 * lat.dim))
        throw std::invalid_argument("mixed_second_gradient: malformed difference set");
    require_separation(lat, x, md.y, L, "mixed_second_gradient");
    const auto ball = ball_sites(lat, x, L);
    double acc = 0.0;
    for (const auto s : ball) {
        double m = 0.0;
        for (int l = 0; l < lat.dim; ++l) {
            const double ga = grad_sq_site(lat, md.diffs[static_cast<std::size_t>(2 * l)], s);
            const double gb = grad_sq_site(lat, md.diffs[static_cast<std::size_t>(2 * l + 1)], s);
            m += 0.5 * (ga + gb);
        }
        acc += m;
    }
    return std::sqrt(acc / static_cast<double>(ball.size()));
}

DecayBoundReport check_deterministic_bounds(const Lattice& lat, const CoefficientField& A,
                                            double mu, const std::vector<int>& probe_radii,
                                            const ProblemSpec& spec) {
    if (probe_radii.size() < 2)
        throw std::invalid_argument("check_deterministic_bounds: need at least two probe radii");
    for (const int r : probe_radii) {
        if (r < 1) throw std::invalid_argument("check_deterministic_bounds: probe radius < 1");
        Coord far{};
        far[0] = 2 * r;
        if (!lat.in_box(far))
            throw std::invalid_argument("check_deterministic_bounds: annulus 2R leaves the box");
    }
    ProblemSpec ps = spec;
    ps.mu = mu;
    const SiteField g = green_column(lat, A, mu, Coord{}, ps);
    const double rmu = std::sqrt(mu);

    // pointwise: log G(r e_1) - log phi_d(r) regressed on -rmu * r
    std::vector<double> xs, ys, rep_point, rep_ann;
    for (const int r : probe_radii) {
        Coord x{};
        x[0] = r;
        const double gv = g[static_cast<std::size_t>(lat.site_index(x))];
        if (gv <= 0.0) throw std::runtime_error("check_deterministic_bounds: nonpositive value");
        const double phi =
            lat.dim == 2 ? std::log(2.0 + 1.0 / (rmu * r)) : 1.0 / static_cast<double>(r);
        xs.push_back(-rmu * static_cast<double>(r));
        ys.push_back(std::log(gv) - std::log(phi));
        rep_point.push_back(gv);
    }
    DecayBoundReport rep;
    {
        const LineFit lf = fit_line(xs, ys);
        rep.point_c = lf.slope;
        rep.point_C = std::exp(lf.intercept);
        rep.point_r2 = lf.r2;
    }

    // annulus-averaged gradient: v_R = (R^-d sum_{R<|x|<=2R} |grad G|^2)^(1/2)
    xs.clear();
    ys.clear();
    for (const int R : probe_radii) {
        double sum = 0.0;
        const double lo2 = static_cast<double>(R) * R + 1e-9;
        const double hi2 = 4.0 * R * R + 1e-9;
        for (std::int64_t i = 0; i < lat.nsites; ++i) {
            const Coord c = lat.site_coord(i);
            const double d2 = dist2(lat, c, Coord{});
            if (d2 > lo2 && d2 <= hi2) sum += grad_sq_site(lat, g, i);
        }
        const double v = std::sqrt(sum / std::pow(static_cast<double>(R), lat.dim));
        if (v <= 0.0) throw std::runtime_error("check_deterministic_bounds: empty annulus");
        xs.push_back(-rmu * static_cast<double>(R));
        ys.push_back(std::log(v) - (1.0 - lat.dim) * std::log(static_cast<double>(R)));
        rep_ann.push_back(v);
    }
    {
        const LineFit lf = fit_line(xs, ys);
        rep.annulus_c = lf.slope;
        rep.annulus_C = std::exp(lf.intercept);
        rep.annulus_r2 = lf.r2;
    }
    rep.radii = probe_radii;
    rep.point_vals = std::move(rep_point);
    rep.annulus_vals = std::move(rep_ann);
    return rep;
}

} // namespace homlab
