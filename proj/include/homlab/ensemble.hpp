#pragma once

#include <cstdint>
#include <vector>

#include "homlab/lattice.hpp"

namespace homlab {

// Random conductance ensembles. Conductances are scalar per undirected edge
// and always land in [lambda, 1].
struct EnsembleSpec {
    enum class Kind { Constant, Checkerboard, PoissonInclusions };
    Kind kind = Kind::Constant;

    double lambda = 1.0; // ellipticity floor

    // Checkerboard: iid site values in {lo, hi}, P(hi) = p_hi. Each edge takes
    // the value of its base site, so a single edge is itself a {lo, hi}
    // Bernoulli variable and is rewritten by exactly one site's resampling.
    double lo = 1.0;
    double hi = 1.0;
    double p_hi = 0.5;

    // PoissonInclusions: Poisson(intensity) points per unit cell; an edge
    // takes inclusion_value when its midpoint lies within inclusion_radius
    // (Euclidean) of some point, else background.
    double intensity = 0.0;
    double inclusion_radius = 0.0;
    double background = 1.0;
    double inclusion_value = 1.0;

    // Declared concentration data, carried into run manifests.
    double lsi_rho = 1.0;
    int corr_length = 1;
};

void validate(const EnsembleSpec& spec); // throws naming the offending field

struct CoefficientField {
    EdgeField a;      // (site, axis) layout, see EdgeField
    double lambda = 1.0;
    std::vector<double> site_values; // checkerboard generator sites; else empty
};

// Deterministic: same (spec, lat, seed) gives a bit-identical field. All
// draws come from one stream in site-index order.
CoefficientField sample(const EnsembleSpec& spec, const Lattice& lat, std::uint64_t seed);

// Fraction of edges at the ensemble's marked value (hi for Checkerboard,
// inclusion_value for PoissonInclusions, none for Constant).
double covered_fraction(const EnsembleSpec& spec, const CoefficientField& A);

} // namespace homlab
