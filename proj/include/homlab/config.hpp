#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "homlab/annealed.hpp"
#include "homlab/ensemble.hpp"
#include "homlab/fluctuations.hpp"
#include "homlab/sensitivity.hpp"
#include "homlab/solver.hpp"

namespace homlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingField : ConfigError {
    using ConfigError::ConfigError;
};
struct UnknownKey : ConfigError {
    using ConfigError::ConfigError;
};
struct RangeViolation : ConfigError {
    using ConfigError::ConfigError;
};

enum class Experiment {
    AnnealedMoments,
    Sensitivity,
    SpectralGap,
    StrongFluct,
    WeakFluct,
    LipschitzScan,
    DeterministicBounds,
};

const char* experiment_name(Experiment e);

struct ExperimentConfig {
    Experiment experiment = Experiment::AnnealedMoments;
    int dim = 2;
    std::uint64_t master_seed = 1;
    int jobs = 1;
    std::string output_dir; // empty: env var, then current directory
    EnsembleSpec ensemble{};
    ProblemSpec solver{};
    int samples = 0;

    // annealed_moments / deterministic_bounds
    double mu = 1.0;
    std::vector<int> radii;
    std::vector<double> q_list;
    RateHandling rate_handling = RateHandling::Pinned;
    double beta = 0.5;
    int box_radius = 0; // 0: derived from mu and probes

    // sensitivity / spectral_gap
    std::vector<std::pair<Coord, Coord>> pairs;
    int n_random_patches = 6;
    double lambda2 = 2.0;
    std::string rhs_kind = "bump"; // bump | delta | constant
    GapFunctional functional{};
    int n_batches = 1;

    // fluctuations (dim, samples, ensemble, solver, jobs mirrored in)
    FluctuationConfig fluct{};

    // lipschitz_scan
    std::vector<int> R_list;
    double q_exp = 2.0;
    double p_exp = 3.0;

    // declared acceptance bands: name -> [max] or [lo, hi]
    std::map<std::string, std::vector<double>> bands;

    std::string canonical; // sorted-key dump of the validated config
};

// Strict: unknown keys, missing required fields, and out-of-range values are
// hard errors carrying the JSON pointer of the offending spot.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

// Effective config serialized with sorted keys and defaults filled in; jobs
// and output_dir excluded. Two configs with equal canonical text describe
// the same run.
std::string canonical_text(const ExperimentConfig& cfg);

// Deterministic run identifier: hash of the canonical config and the tool
// version. 16 hex digits.
std::string run_id(const ExperimentConfig& cfg);

extern const char* const kToolVersion;

} // namespace homlab
