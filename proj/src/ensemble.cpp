#include "homlab/ensemble.hpp"

#include <cmath>
#include <stdexcept>

#include "homlab/rng.hpp"

namespace homlab {

void validate(const EnsembleSpec& spec) {
    if (!(spec.lambda > 0.0 && spec.lambda <= 1.0))
        throw std::invalid_argument("ensemble.lambda: must lie in (0, 1]");
    switch (spec.kind) {
    case EnsembleSpec::Kind::Constant:
        break;
    case EnsembleSpec::Kind::Checkerboard:
        if (!(spec.lo >= spec.lambda && spec.lo <= 1.0))
            throw std::invalid_argument("ensemble.lo: must lie in [lambda, 1]");
        if (!(spec.hi >= spec.lo && spec.hi <= 1.0))
            throw std::invalid_argument("ensemble.hi: must lie in [lo, 1]");
        if (!(spec.p_hi >= 0.0 && spec.p_hi <= 1.0))
            throw std::invalid_argument("ensemble.p_hi: must lie in [0, 1]");
        break;
    case EnsembleSpec::Kind::PoissonInclusions:
        if (!(spec.intensity >= 0.0))
            throw std::invalid_argument("ensemble.intensity: must be >= 0");
        if (!(spec.inclusion_radius >= 0.0))
            throw std::invalid_argument("ensemble.inclusion_radius: must be >= 0");
        if (!(spec.background >= spec.lambda && spec.background <= 1.0))
            throw std::invalid_argument("ensemble.background: must lie in [lambda, 1]");
        if (!(spec.inclusion_value >= spec.lambda && spec.inclusion_value <= 1.0))
            throw std::invalid_argument("ensemble.inclusion_value: must lie in [lambda, 1]");
        break;
    }
    if (!(spec.lsi_rho > 0.0))
        throw std::invalid_argument("ensemble.lsi_rho: must be > 0");
    if (spec.corr_length < 1)
        throw std::invalid_argument("ensemble.corr_length: must be >= 1");
}

namespace {

CoefficientField sample_checkerboard(const EnsembleSpec& spec, const Lattice& lat, std::uint64_t seed) {
    CoefficientField A;
    A.lambda = spec.lambda;
    A.site_values.resize(static_cast<std::size_t>(lat.nsites));
    Rng rng(seed);
    for (std::int64_t i = 0; i < lat.nsites; ++i)
        A.site_values[i] = rng.bernoulli(spec.p_hi) ? spec.hi : spec.lo;
    A.a.resize(static_cast<std::size_t>(lat.nedges()));
    for (std::int64_t i = 0; i < lat.nsites; ++i)
        for (int k = 0; k < lat.dim; ++k) A.a[i * lat.dim + k] = A.site_values[i];
    return A;
}

CoefficientField sample_poisson(const EnsembleSpec& spec, const Lattice& lat, std::uint64_t seed) {
    CoefficientField A;
    A.lambda = spec.lambda;
    A.a.assign(static_cast<std::size_t>(lat.nedges()), spec.background);

    // one Poisson count plus dim uniforms per point, in site-index order
    Rng rng(seed);
    std::vector<std::array<double, 3>> pts;
    std::vector<std::int64_t> cell_off(static_cast<std::size_t>(lat.nsites) + 1, 0);
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        const std::uint64_t count = rng.poisson(spec.intensity);
        for (std::uint64_t n = 0; n < count; ++n) {
            std::array<double, 3> p{};
            for (int k = 0; k < lat.dim; ++k) p[k] = c[k] + rng.uniform(-0.5, 0.5);
            pts.push_back(p);
        }
        cell_off[i + 1] = static_cast<std::int64_t>(pts.size());
    }

    const double r = spec.inclusion_radius;
    const double r2 = r * r;
    const int reach = static_cast<int>(std::ceil(r + 0.5)) + 1;
    const double span = static_cast<double>(lat.side);

    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        for (int k = 0; k < lat.dim; ++k) {
            std::array<double, 3> mid{};
            for (int j = 0; j < lat.dim; ++j) mid[j] = c[j];
            mid[k] += 0.5;

            bool covered = false;
            Coord cc{};
            for (int o0 = -reach; o0 <= reach && !covered; ++o0) {
                cc[0] = c[0] + o0;
                for (int o1 = -reach; o1 <= reach && !covered; ++o1) {
                    cc[1] = c[1] + o1;
                    const int o2hi = (lat.dim == 3) ? reach : 0;
                    for (int o2 = -o2hi; o2 <= o2hi && !covered; ++o2) {
                        if (lat.dim == 3) cc[2] = c[2] + o2;
                        Coord w = cc;
                        if (lat.boundary == Boundary::Periodic) {
                            for (int j = 0; j < lat.dim; ++j) {
                                while (w[j] > lat.radius) w[j] -= lat.side;
                                while (w[j] < -lat.radius) w[j] += lat.side;
                            }
                        } else if (!lat.in_box(w)) {
                            continue;
                        }
                        const std::int64_t cell = lat.site_index(w);
                        for (std::int64_t n = cell_off[cell]; n < cell_off[cell + 1]; ++n) {
                            double d2 = 0.0;
                            for (int j = 0; j < lat.dim; ++j) {
                                double dx = pts[n][j] - mid[j];
                                if (lat.boundary == Boundary::Periodic) {
                                    if (dx > 0.5 * span) dx -= span;
                                    if (dx < -0.5 * span) dx += span;
                                }
                                d2 += dx * dx;
                            }
                            if (d2 <= r2) { covered = true; break; }
                        }
                    }
                }
            }
            if (covered) A.a[i * lat.dim + k] = spec.inclusion_value;
        }
    }
    return A;
}

} // namespace

CoefficientField sample(const EnsembleSpec& spec, const Lattice& lat, std::uint64_t seed) {
    validate(spec);
    switch (spec.kind) {
    case EnsembleSpec::Kind::Constant: {
        CoefficientField A;
        A.lambda = spec.lambda;
        A.a.assign(static_cast<std::size_t>(lat.nedges()), 1.0);
        return A;
    }
    case EnsembleSpec::Kind::Checkerboard:
        return sample_checkerboard(spec, lat, seed);
    case EnsembleSpec::Kind::PoissonInclusions:
        return sample_poisson(spec, lat, seed);
    }
    throw std::logic_error("sample: unreachable");
}

double covered_fraction(const EnsembleSpec& spec, const CoefficientField& A) {
    if (spec.kind == EnsembleSpec::Kind::Constant) return 0.0;
    const double marked = (spec.kind == EnsembleSpec::Kind::Checkerboard) ? spec.hi : spec.inclusion_value;
    std::int64_t hits = 0;
    for (double v : A.a)
        if (v == marked) ++hits;
    return A.a.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(A.a.size());
}

} // namespace homlab
