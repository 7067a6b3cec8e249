#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "homlab/config.hpp"

namespace homlab {

struct RunOutcome {
    int exit_code = 0; // 0: clean, 2: a declared band failed
    std::string run_dir;
    std::string manifest_path;
    std::vector<std::string> band_failures;
};

// Output root: the override argument, then the config's output_dir, then
// $HOMLAB_OUT_DIR, then the current directory. Artifacts go to <root>/<id>/.
std::string resolve_output_root(const ExperimentConfig& cfg, const std::string& override_dir);

// Seeds the run will consume, in deterministic order. Recorded in the
// manifest before any solve starts.
std::vector<std::uint64_t> sample_seeds(const ExperimentConfig& cfg);

// Band names a config of this kind may declare.
std::vector<std::string> allowed_band_stats(Experiment e);

// Rejects bands naming statistics the experiment kind never reports.
void validate_bands(const ExperimentConfig& cfg);

// Executes the experiment and writes manifest.json, results.csv, fits.json
// and plot_*.dat. The manifest is written before the run starts and is
// finalized (wall time, failures) afterwards; it is the only artifact whose
// bytes vary between identical runs. Execution errors are recorded in the
// manifest and rethrown.
RunOutcome run_experiment(const ExperimentConfig& cfg, const std::string& out_override = "");

struct CompareReport {
    std::string kind;
    std::string run_a, run_b;
    std::size_t rows = 0;
    bool identical = false;   // results.csv bytes match
    double max_rel_diff = 0.0;
    std::string max_rel_column;
    int ci_rows = 0;     // rows carrying ci_lo/ci_hi bounds
    int ci_disjoint = 0; // of those, rows whose intervals do not overlap
    std::vector<std::string> lines;
};

// Column-by-column comparison of two runs' result tables. The runs must be
// the same experiment kind; a schema-version mismatch is an error.
CompareReport compare_runs(const std::string& manifest_a, const std::string& manifest_b);

} // namespace homlab
