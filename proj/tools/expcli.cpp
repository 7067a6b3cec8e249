#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "homlab/config.hpp"
#include "homlab/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"lattice homogenization experiment driver"};
    app.require_subcommand(1);

    std::string run_config, out_dir;
    int jobs = 1;
    std::uint64_t seed = 0;
    CLI::App* run_cmd = app.add_subcommand("run", "execute a config and write artifacts");
    run_cmd->add_option("config", run_config, "JSON experiment config")->required();
    run_cmd->add_option("--out", out_dir,
                        "output root (default: config output_dir, then $HOMLAB_OUT_DIR, then .)");
    CLI::Option* jobs_opt =
        run_cmd->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    CLI::Option* seed_opt = run_cmd->add_option("--seed", seed, "override the master seed");

    std::string check_config;
    CLI::App* check_cmd = app.add_subcommand("check", "validate a config without running it");
    check_cmd->add_option("config", check_config, "JSON experiment config")->required();

    std::string manifest_a, manifest_b;
    CLI::App* compare_cmd = app.add_subcommand("compare", "compare two runs' result tables");
    compare_cmd->add_option("manifest_a", manifest_a, "first run manifest.json")->required();
    compare_cmd->add_option("manifest_b", manifest_b, "second run manifest.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run_cmd->parsed()) {
            homlab::ExperimentConfig cfg = homlab::parse_config(run_config);
            if (jobs_opt->count() > 0) cfg.jobs = jobs;
            if (seed_opt->count() > 0) cfg.master_seed = seed;
            const homlab::RunOutcome out = homlab::run_experiment(cfg, out_dir);
            std::printf("run %s (%s): artifacts in %s\n", homlab::run_id(cfg).c_str(),
                        homlab::experiment_name(cfg.experiment), out.run_dir.c_str());
            for (const std::string& bf : out.band_failures)
                std::printf("  FAIL %s\n", bf.c_str());
            if (out.exit_code == 0) std::printf("  all declared bands pass\n");
            return out.exit_code;
        }
        if (check_cmd->parsed()) {
            const homlab::ExperimentConfig cfg = homlab::parse_config(check_config);
            homlab::validate_bands(cfg);
            std::printf("ok: %s, run id %s, %zu sample seeds, %zu bands\n",
                        homlab::experiment_name(cfg.experiment), homlab::run_id(cfg).c_str(),
                        homlab::sample_seeds(cfg).size(), cfg.bands.size());
            return 0;
        }
        const homlab::CompareReport rep = homlab::compare_runs(manifest_a, manifest_b);
        std::printf("compare %s: %s vs %s\n", rep.kind.c_str(), rep.run_a.c_str(),
                    rep.run_b.c_str());
        std::printf("  rows %zu, byte-identical: %s\n", rep.rows, rep.identical ? "yes" : "no");
        for (const std::string& line : rep.lines) std::printf("  %s\n", line.c_str());
        std::printf("  max rel diff %.3e%s%s\n", rep.max_rel_diff,
                    rep.max_rel_column.empty() ? "" : " in column ", rep.max_rel_column.c_str());
        return 0;
    } catch (const std::exception& ex) {
        std::fprintf(stderr, "error: %s\n", ex.what());
        return 1;
    }
}
