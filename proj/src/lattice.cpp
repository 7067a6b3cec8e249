#include "homlab/lattice.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace homlab {

Lattice make_lattice(int dim, int radius, Boundary boundary) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("make_lattice: dim must be 2 or 3");
    if (radius < 1) throw std::invalid_argument("make_lattice: radius must be >= 1");

    Lattice lat;
    lat.dim = dim;
    lat.radius = radius;
    lat.boundary = boundary;
    lat.side = 2 * radius + 1;
    lat.nsites = 1;
    for (int k = 0; k < dim; ++k) lat.nsites *= lat.side;
    if (lat.nsites > (std::int64_t{1} << 31) - 1)
        throw std::invalid_argument("make_lattice: box too large for 32-bit site indices");

    lat.stride[dim - 1] = 1;
    for (int k = dim - 2; k >= 0; --k) lat.stride[k] = lat.stride[k + 1] * lat.side;

    for (int k = 0; k < dim; ++k) {
        lat.nbr_plus[k].assign(static_cast<std::size_t>(lat.nsites), -1);
        lat.nbr_minus[k].assign(static_cast<std::size_t>(lat.nsites), -1);
    }
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        const Coord c = lat.site_coord(i);
        for (int k = 0; k < dim; ++k) {
            Coord p = c;
            p[k] += 1;
            if (p[k] > radius && boundary == Boundary::Periodic) p[k] = -radius;
            if (p[k] <= radius) lat.nbr_plus[k][i] = static_cast<std::int32_t>(lat.site_index(p));

            Coord m = c;
            m[k] -= 1;
            if (m[k] < -radius && boundary == Boundary::Periodic) m[k] = radius;
            if (m[k] >= -radius) lat.nbr_minus[k][i] = static_cast<std::int32_t>(lat.site_index(m));
        }
    }
    return lat;
}

EdgeField gradient(const Lattice& lat, const SiteField& u) {
    if (static_cast<std::int64_t>(u.size()) != lat.nsites)
        throw std::invalid_argument("gradient: field length != site count");
    EdgeField F(static_cast<std::size_t>(lat.nedges()));
    const int dim = lat.dim;
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        for (int k = 0; k < dim; ++k) {
            const std::int32_t j = lat.nbr_plus[k][i];
            F[i * dim + k] = (j >= 0 ? u[j] : 0.0) - u[i];
        }
    }
    return F;
}

SiteField divergence(const Lattice& lat, const EdgeField& F) {
    if (static_cast<std::int64_t>(F.size()) != lat.nedges())
        throw std::invalid_argument("divergence: field length != edge count");
    SiteField d(static_cast<std::size_t>(lat.nsites));
    const int dim = lat.dim;
    for (std::int64_t i = 0; i < lat.nsites; ++i) {
        double acc = 0.0;
        for (int k = 0; k < dim; ++k) {
            acc += F[i * dim + k];
            const std::int32_t jm = lat.nbr_minus[k][i];
            if (jm >= 0) acc -= F[jm * dim + k];
        }
        d[i] = acc;
    }
    return d;
}

double dist2(const Lattice& lat, const Coord& a, const Coord& b) {
    double s = 0.0;
    for (int k = 0; k < lat.dim; ++k) {
        int dx = std::abs(a[k] - b[k]);
        if (lat.boundary == Boundary::Periodic && dx > lat.side - dx) dx = lat.side - dx;
        s += static_cast<double>(dx) * dx;
    }
    return s;
}

std::vector<std::int64_t> ball_sites(const Lattice& lat, const Coord& center, double L) {
    if (L < 0.0) throw std::invalid_argument("ball_sites: negative radius");
    std::vector<std::int64_t> out;
    const int Lc = static_cast<int>(std::floor(L));
    const double L2 = L * L + 1e-9;
    Coord off{};
    const int lo = -Lc, hi = Lc;
    for (int o0 = lo; o0 <= hi; ++o0) {
        off[0] = o0;
        for (int o1 = lo; o1 <= hi; ++o1) {
            off[1] = o1;
            if (lat.dim == 2) {
                if (static_cast<double>(o0) * o0 + static_cast<double>(o1) * o1 > L2) continue;
                Coord c{center[0] + o0, center[1] + o1, 0};
                if (lat.boundary == Boundary::Periodic) {
                    for (int k = 0; k < 2; ++k) {
                        while (c[k] > lat.radius) c[k] -= lat.side;
                        while (c[k] < -lat.radius) c[k] += lat.side;
                    }
                } else if (!lat.in_box(c)) {
                    continue;
                }
                out.push_back(lat.site_index(c));
            } else {
                for (int o2 = lo; o2 <= hi; ++o2) {
                    off[2] = o2;
                    const double r2 = static_cast<double>(o0) * o0 +
                                      static_cast<double>(o1) * o1 +
                                      static_cast<double>(o2) * o2;
                    if (r2 > L2) continue;
                    Coord c{center[0] + o0, center[1] + o1, center[2] + o2};
                    if (lat.boundary == Boundary::Periodic) {
                        for (int k = 0; k < 3; ++k) {
                            while (c[k] > lat.radius) c[k] -= lat.side;
                            while (c[k] < -lat.radius) c[k] += lat.side;
                        }
                    } else if (!lat.in_box(c)) {
                        continue;
                    }
                    out.push_back(lat.site_index(c));
                }
            }
        }
    }
    return out;
}

} // namespace homlab
