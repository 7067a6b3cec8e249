#include "doctest.h"

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "homlab/config.hpp"
#include "homlab/rng.hpp"
#include "homlab/runner.hpp"

using namespace homlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kBounds = R"({
    "experiment": "deterministic_bounds",
    "dim": 2,
    "master_seed": 6,
    "mu": 0.5,
    "radii": [2, 4],
    "samples": 2,
    "ensemble": {"kind": "checkerboard", "lambda": 0.25}
})";

fs::path fresh_dir(const char* leaf) {
    const fs::path p = fs::temp_directory_path() / "homlab_test_runner" / leaf;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
}

std::string with(const std::string& base, const std::string& needle,
                 const std::string& replacement) {
    std::string s = base;
    const std::size_t pos = s.find(needle);
    REQUIRE(pos != std::string::npos);
    s.replace(pos, needle.size(), replacement);
    return s;
}

} // namespace

TEST_CASE("bands may only name statistics the kind reports") {
    const std::string good = with(kBounds, "\"mu\": 0.5",
                                  "\"mu\": 0.5, \"bands\": {\"point_rate_min\": [0.0, 9.0]}");
    CHECK_NOTHROW(validate_bands(parse_config_text(good)));

    // "slope" belongs to the fluctuation kinds, not to the bounds scan
    const std::string bad =
        with(kBounds, "\"mu\": 0.5", "\"mu\": 0.5, \"bands\": {\"slope\": [1.0]}");
    const ExperimentConfig cfg = parse_config_text(bad); // parse is shape-only
    bool threw = false;
    try {
        validate_bands(cfg);
    } catch (const ConfigError& ex) {
        threw = true;
        CHECK(std::string(ex.what()).find("/bands/slope") != std::string::npos);
    }
    CHECK(threw);
    CHECK_THROWS_AS(run_experiment(cfg, fresh_dir("reject").string()), ConfigError);
}

TEST_CASE("output root resolution precedence") {
    ExperimentConfig cfg = parse_config_text(kBounds);
    unsetenv("HOMLAB_OUT_DIR");
    CHECK(resolve_output_root(cfg, "override") == "override");
    CHECK(resolve_output_root(cfg, "") == ".");

    setenv("HOMLAB_OUT_DIR", "envdir", 1);
    CHECK(resolve_output_root(cfg, "") == "envdir");
    CHECK(resolve_output_root(cfg, "override") == "override");

    cfg.output_dir = "cfgdir";
    CHECK(resolve_output_root(cfg, "") == "cfgdir");
    CHECK(resolve_output_root(cfg, "override") == "override");
    unsetenv("HOMLAB_OUT_DIR");
}

TEST_CASE("seed schedule matches the documented derivation") {
    const ExperimentConfig bounds = parse_config_text(kBounds);
    CHECK(sample_seeds(bounds) ==
          std::vector<std::uint64_t>{child_seed(6, 0), child_seed(6, 1)});

    const ExperimentConfig gap = parse_config_text(R"({
        "experiment": "spectral_gap", "dim": 2, "master_seed": 8, "mu": 1.0,
        "samples": 2, "batches": 2, "box_radius": 4,
        "functional": {"kind": "point_value", "site": [0, 0]},
        "ensemble": {"kind": "checkerboard", "lambda": 0.25}
    })");
    std::vector<std::uint64_t> want;
    for (int b = 0; b < 2; ++b) {
        const std::uint64_t mb = child_seed(8ull ^ 0x6761706261746368ull, b);
        for (int s = 0; s < 2; ++s) want.push_back(child_seed(mb, s));
    }
    CHECK(sample_seeds(gap) == want);

    const ExperimentConfig fluct = parse_config_text(R"({
        "experiment": "strong_fluct", "dim": 2, "master_seed": 9,
        "sizes": [8, 10, 12], "samples": 16,
        "ensemble": {"kind": "checkerboard", "lambda": 0.25}
    })");
    want.clear();
    for (std::size_t si = 0; si < 3; ++si)
        for (int s = 0; s < 16; ++s) want.push_back(child_seed(9, si * 16 + s));
    CHECK(sample_seeds(fluct) == want);

    const ExperimentConfig lip = parse_config_text(R"({
        "experiment": "lipschitz_scan", "dim": 2, "master_seed": 11,
        "R_list": [4, 6], "samples": 20,
        "ensemble": {"kind": "checkerboard", "lambda": 0.25}
    })");
    want.clear();
    for (std::size_t ri = 0; ri < 2; ++ri)
        for (int s = 0; s < 20; ++s) want.push_back(child_seed(11, ri * 20 + s));
    CHECK(sample_seeds(lip) == want);
}

TEST_CASE("a bounds run writes the linked artifact set") {
    const ExperimentConfig cfg = parse_config_text(kBounds);
    const fs::path root = fresh_dir("artifacts");
    const RunOutcome out = run_experiment(cfg, root.string());
    CHECK(out.exit_code == 0);
    CHECK(out.band_failures.empty());

    const std::string id = run_id(cfg);
    CHECK(fs::path(out.run_dir) == root / id);

    const json m = json::parse(slurp(root / id / "manifest.json"));
    CHECK(m.at("schema") == "run_manifest.v1");
    CHECK(m.at("run_id") == id);
    CHECK(m.at("experiment") == "deterministic_bounds");
    CHECK(m.at("completed") == true);
    CHECK(m.at("failures").empty());
    CHECK(m.at("sample_seeds").get<std::vector<std::uint64_t>>() == sample_seeds(cfg));
    REQUIRE(m.at("artifacts").size() >= 2);
    for (const json& name : m.at("artifacts"))
        CHECK(fs::exists(root / id / name.get<std::string>()));

    const std::string csv = slurp(root / id / "results.csv");
    CHECK(csv.rfind("# schema=deterministic_bounds.v1 manifest=" + id, 0) == 0);

    const json fits = json::parse(slurp(root / id / "fits.json"));
    CHECK(fits.at("manifest") == id);
    CHECK(fits.at("schema") == "deterministic_bounds_fits.v1");
    CHECK(fits.at("stats").contains("point_rate_min"));
    CHECK(fits.at("stats").contains("annulus_rate_min"));
}

TEST_CASE("a failing declared band exits 2 and keeps its artifacts") {
    const std::string text = with(
        kBounds, "\"mu\": 0.5",
        "\"mu\": 0.5, \"bands\": {\"point_rate_min\": [0.0], \"annulus_rate_min\": [1e6, 2e6]}");
    const ExperimentConfig cfg = parse_config_text(text);
    const fs::path root = fresh_dir("bandfail");
    const RunOutcome out = run_experiment(cfg, root.string());
    CHECK(out.exit_code == 2);
    REQUIRE(out.band_failures.size() == 2);
    CHECK(out.band_failures[0].find("annulus_rate_min") != std::string::npos);
    CHECK(out.band_failures[0].find("outside") != std::string::npos);
    CHECK(out.band_failures[1].find("point_rate_min") != std::string::npos);
    CHECK(out.band_failures[1].find("exceeds") != std::string::npos);

    // the run itself completed; the verdict lives in the manifest and fits
    const fs::path dir = out.run_dir;
    const json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m.at("completed") == true);
    CHECK(m.at("band_failures").size() == 2);
    const json fits = json::parse(slurp(dir / "fits.json"));
    CHECK(fits.at("bands").at("point_rate_min").at("pass") == false);
    CHECK(fits.at("bands").at("annulus_rate_min").at("pass") == false);
}

TEST_CASE("reruns are byte-identical and the compare tool agrees") {
    const ExperimentConfig cfg = parse_config_text(kBounds);
    const fs::path ra = fresh_dir("rerun_a");
    const fs::path rb = fresh_dir("rerun_b");
    const RunOutcome oa = run_experiment(cfg, ra.string());
    const RunOutcome ob = run_experiment(cfg, rb.string());

    const json m = json::parse(slurp(oa.manifest_path));
    for (const json& name : m.at("artifacts")) {
        const std::string leaf = name.get<std::string>();
        CHECK(slurp(fs::path(oa.run_dir) / leaf) == slurp(fs::path(ob.run_dir) / leaf));
    }

    const CompareReport rep = compare_runs(oa.manifest_path, ob.manifest_path);
    CHECK(rep.kind == "deterministic_bounds");
    CHECK(rep.identical);
    CHECK(rep.max_rel_diff == 0.0);
    CHECK(rep.rows > 0);
    CHECK(rep.ci_disjoint == 0);
}

TEST_CASE("compare flags numeric drift and disjoint intervals") {
    const fs::path da = fresh_dir("cmp_a");
    const fs::path db = fresh_dir("cmp_b");
    const char* header = "# schema=demo.v1 manifest=x\nidx,value,ci_lo,ci_hi\n";
    spit(da / "manifest.json", R"({"experiment":"demo","run_id":"aaa"})");
    spit(db / "manifest.json", R"({"experiment":"demo","run_id":"bbb"})");
    spit(da / "results.csv", std::string(header) + "0,1.0,0.9,1.1\n1,2.0,1.9,2.1\n");
    spit(db / "results.csv", std::string(header) + "0,3.0,2.9,3.1\n1,2.0,1.9,2.1\n");

    const CompareReport rep =
        compare_runs((da / "manifest.json").string(), (db / "manifest.json").string());
    CHECK_FALSE(rep.identical);
    CHECK(rep.rows == 2);
    CHECK(rep.max_rel_column == "ci_lo"); // |0.9-2.9|/2.9 beats the value column
    CHECK(rep.max_rel_diff == doctest::Approx(2.0 / 2.9));
    CHECK(rep.ci_rows == 2);
    CHECK(rep.ci_disjoint == 1);

    const fs::path dc = fresh_dir("cmp_c");
    spit(dc / "manifest.json", R"({"experiment":"other","run_id":"ccc"})");
    spit(dc / "results.csv", std::string(header) + "0,1.0,0.9,1.1\n");
    CHECK_THROWS_AS(
        compare_runs((da / "manifest.json").string(), (dc / "manifest.json").string()),
        ConfigError);
}
