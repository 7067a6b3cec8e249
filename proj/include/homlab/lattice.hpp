#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace homlab {

enum class Boundary { Dirichlet, Periodic };

// Site scalars and per-directed-edge scalars. Edge storage is (site, axis):
// entry site*dim + axis holds the value on the undirected edge from the site
// to its +axis neighbor; the two directed copies share it.
using SiteField = std::vector<double>;
using EdgeField = std::vector<double>;

using Coord = std::array<int, 3>; // unused trailing axes stay 0

// Box [-radius, radius]^dim, dim in {2,3}. Dirichlet clamps the exterior
// site value to zero; Periodic wraps. Neighbor tables are precomputed so the
// operator stencil runs without per-site branching.
struct Lattice {
    int dim = 0;
    int radius = 0;
    Boundary boundary = Boundary::Dirichlet;
    int side = 0;
    std::int64_t nsites = 0;
    std::array<std::int64_t, 3> stride{};

    // nbr_plus[k][i] / nbr_minus[k][i]: site index one step along +/-axis k,
    // -1 when the step leaves a Dirichlet box.
    std::array<std::vector<std::int32_t>, 3> nbr_plus;
    std::array<std::vector<std::int32_t>, 3> nbr_minus;

    std::int64_t nedges() const { return nsites * dim; }

    std::int64_t site_index(const Coord& c) const {
        std::int64_t idx = 0;
        for (int k = 0; k < dim; ++k) idx += static_cast<std::int64_t>(c[k] + radius) * stride[k];
        return idx;
    }

    Coord site_coord(std::int64_t idx) const {
        Coord c{};
        for (int k = 0; k < dim; ++k) {
            c[k] = static_cast<int>(idx / stride[k]) - radius;
            idx %= stride[k];
        }
        return c;
    }

    bool in_box(const Coord& c) const {
        for (int k = 0; k < dim; ++k)
            if (c[k] < -radius || c[k] > radius) return false;
        return true;
    }
};

Lattice make_lattice(int dim, int radius, Boundary boundary);

// Edge value = u(head) - u(tail); exterior u is 0 on Dirichlet boxes.
EdgeField gradient(const Lattice& lat, const SiteField& u);

// Negative adjoint of gradient: sum_sites div(F)*u == -sum_edges F*grad(u)
// for every u, F. Composition divergence(gradient(.)) is the negative graph
// Laplacian.
SiteField divergence(const Lattice& lat, const EdgeField& F);

// Sites of the closed Euclidean ball of radius L around center, in a fixed
// lexicographic-offset order. Dirichlet: intersected with the box. Periodic:
// wrapped, distances in the min-image metric.
std::vector<std::int64_t> ball_sites(const Lattice& lat, const Coord& center, double L);

double dist2(const Lattice& lat, const Coord& a, const Coord& b); // min-image on periodic

} // namespace homlab
