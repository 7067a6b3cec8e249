#include "homlab/config.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace homlab {

using nlohmann::json;

const char* const kToolVersion = "0.1.0";

const char* experiment_name(Experiment e) {
    switch (e) {
    case Experiment::AnnealedMoments: return "annealed_moments";
    case Experiment::Sensitivity: return "sensitivity";
    case Experiment::SpectralGap: return "spectral_gap";
    case Experiment::StrongFluct: return "strong_fluct";
    case Experiment::WeakFluct: return "weak_fluct";
    case Experiment::LipschitzScan: return "lipschitz_scan";
    case Experiment::DeterministicBounds: return "deterministic_bounds";
    }
    return "?";
}

namespace {

// Tracks consumed keys so every leftover is reported as UnknownKey with its
// JSON pointer.
class Obj {
public:
    Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
    }

    const json* find(const std::string& key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    const json& need(const std::string& key) {
        const json* p = find(key);
        if (p == nullptr) throw MissingField(at(key) + ": required field missing");
        return *p;
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    double num_req(const std::string& key) { return as_num(need(key), key); }
    double num(const std::string& key, double dflt) {
        const json* p = find(key);
        return p ? as_num(*p, key) : dflt;
    }

    int int_req(const std::string& key) { return as_int(need(key), key); }
    int int_opt(const std::string& key, int dflt) {
        const json* p = find(key);
        return p ? as_int(*p, key) : dflt;
    }

    std::uint64_t uint_opt(const std::string& key, std::uint64_t dflt) {
        const json* p = find(key);
        if (p == nullptr) return dflt;
        if (!p->is_number_integer() && !p->is_number_unsigned())
            throw ConfigError(at(key) + ": expected an unsigned integer");
        if (p->is_number_integer() && p->get<std::int64_t>() < 0)
            throw RangeViolation(at(key) + ": must be nonnegative");
        return p->get<std::uint64_t>();
    }

    bool bool_opt(const std::string& key, bool dflt) {
        const json* p = find(key);
        if (p == nullptr) return dflt;
        if (!p->is_boolean()) throw ConfigError(at(key) + ": expected a boolean");
        return p->get<bool>();
    }

    std::string str_req(const std::string& key) { return as_str(need(key), key); }
    std::string str_opt(const std::string& key, const std::string& dflt) {
        const json* p = find(key);
        return p ? as_str(*p, key) : dflt;
    }

    std::vector<int> int_list_req(const std::string& key) {
        const json& v = need(key);
        if (!v.is_array() || v.empty())
            throw ConfigError(at(key) + ": expected a nonempty array of integers");
        std::vector<int> out;
        for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_int(v[i], key));
        return out;
    }

    std::vector<double> num_list_opt(const std::string& key, std::vector<double> dflt) {
        const json* p = find(key);
        if (p == nullptr) return dflt;
        if (!p->is_array() || p->empty())
            throw ConfigError(at(key) + ": expected a nonempty array of numbers");
        std::vector<double> out;
        for (std::size_t i = 0; i < p->size(); ++i) out.push_back(as_num((*p)[i], key));
        return out;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (seen_.find(it.key()) == seen_.end())
                throw UnknownKey(at(it.key()) + ": unknown key");
    }

    std::string at(const std::string& key) const { return path_ + "/" + key; }
    const std::string& path() const { return path_; }

private:
    double as_num(const json& v, const std::string& key) const {
        if (!v.is_number()) throw ConfigError(at(key) + ": expected a number");
        return v.get<double>();
    }
    int as_int(const json& v, const std::string& key) const {
        if (!v.is_number_integer() && !v.is_number_unsigned())
            throw ConfigError(at(key) + ": expected an integer");
        return v.get<int>();
    }
    std::string as_str(const json& v, const std::string& key) const {
        if (!v.is_string()) throw ConfigError(at(key) + ": expected a string");
        return v.get<std::string>();
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

[[noreturn]] void range_error(const std::string& where, const std::string& msg) {
    throw RangeViolation(where + ": " + msg);
}

// Radius lists double as x-axes for log-log fits, so they must grow.
void require_increasing(const std::vector<int>& v, const std::string& where, int floor) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (v[i] < floor)
            range_error(where, "entries must be >= " + std::to_string(floor));
        if (i > 0 && v[i] <= v[i - 1])
            range_error(where, "entries must be strictly increasing");
    }
}

EnsembleSpec parse_ensemble(const json& j, const std::string& path) {
    Obj o(j, path);
    const std::string kind = o.str_req("kind");
    EnsembleSpec e;
    if (kind == "constant") {
        e.kind = EnsembleSpec::Kind::Constant;
        e.lambda = o.num("lambda", 1.0);
    } else if (kind == "checkerboard") {
        e.kind = EnsembleSpec::Kind::Checkerboard;
        e.lambda = o.num_req("lambda");
        e.lo = o.num("lo", e.lambda);
        e.hi = o.num("hi", 1.0);
        e.p_hi = o.num("p_hi", 0.5);
    } else if (kind == "poisson") {
        e.kind = EnsembleSpec::Kind::PoissonInclusions;
        e.lambda = o.num_req("lambda");
        e.intensity = o.num_req("intensity");
        e.inclusion_radius = o.num_req("inclusion_radius");
        e.background = o.num("background", 1.0);
        e.inclusion_value = o.num("inclusion_value", e.lambda);
    } else {
        range_error(o.at("kind"), "unknown ensemble kind '" + kind + "'");
    }
    e.lsi_rho = o.num("lsi_rho", 1.0);
    o.finish();
    try {
        validate(e);
    } catch (const std::exception& ex) {
        range_error(path, ex.what());
    }
    return e;
}

ProblemSpec parse_solver(const json* j, const std::string& path) {
    ProblemSpec s;
    if (j == nullptr) return s;
    Obj o(*j, path);
    s.tolerance = o.num("tolerance", s.tolerance);
    s.max_iterations = o.int_opt("max_iterations", 0);
    s.jacobi = o.bool_opt("jacobi", false);
    o.finish();
    if (s.tolerance <= 0.0 || s.tolerance > 1e-4)
        range_error(path + "/tolerance", "must lie in (0, 1e-4]");
    if (s.max_iterations < 0) range_error(path + "/max_iterations", "must be >= 0");
    return s;
}

Coord parse_coord(const json& j, int dim, const std::string& path) {
    if (!j.is_array() || j.size() != static_cast<std::size_t>(dim))
        throw ConfigError(path + ": expected an array of " + std::to_string(dim) +
                          " integers");
    Coord c{};
    for (int k = 0; k < dim; ++k) {
        if (!j[static_cast<std::size_t>(k)].is_number_integer())
            throw ConfigError(path + ": expected an array of integers");
        c[static_cast<std::size_t>(k)] = j[static_cast<std::size_t>(k)].get<int>();
    }
    return c;
}

void parse_bands(Obj& top, ExperimentConfig& cfg) {
    const json* b = top.find("bands");
    if (b == nullptr) return;
    if (!b->is_object()) throw ConfigError(top.at("bands") + ": expected an object");
    for (auto it = b->begin(); it != b->end(); ++it) {
        const json& v = it.value();
        if (!v.is_array() || v.empty() || v.size() > 2)
            throw ConfigError(top.at("bands") + "/" + it.key() +
                              ": expected an array of 1 or 2 numbers");
        std::vector<double> vals;
        for (const auto& x : v) {
            if (!x.is_number())
                throw ConfigError(top.at("bands") + "/" + it.key() + ": expected numbers");
            vals.push_back(x.get<double>());
        }
        cfg.bands[it.key()] = vals;
    }
}

Profile parse_profile(Obj& o, const std::string& key, Profile dflt) {
    const std::string s = o.str_opt(key, dflt == Profile::Bump ? "bump" : "plane_wave");
    if (s == "bump") return Profile::Bump;
    if (s == "plane_wave") return Profile::PlaneWave;
    range_error(o.at(key), "expected 'bump' or 'plane_wave'");
}

} // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Obj top(j, "");
    ExperimentConfig cfg;

    const std::string exp = top.str_req("experiment");
    if (exp == "annealed_moments") cfg.experiment = Experiment::AnnealedMoments;
    else if (exp == "sensitivity") cfg.experiment = Experiment::Sensitivity;
    else if (exp == "spectral_gap") cfg.experiment = Experiment::SpectralGap;
    else if (exp == "strong_fluct") cfg.experiment = Experiment::StrongFluct;
    else if (exp == "weak_fluct") cfg.experiment = Experiment::WeakFluct;
    else if (exp == "lipschitz_scan") cfg.experiment = Experiment::LipschitzScan;
    else if (exp == "deterministic_bounds") cfg.experiment = Experiment::DeterministicBounds;
    else range_error("/experiment", "unknown experiment '" + exp + "'");

    cfg.dim = top.int_opt("dim", 2);
    if (cfg.dim != 2 && cfg.dim != 3) range_error("/dim", "must be 2 or 3");
    cfg.master_seed = top.uint_opt("master_seed", 1);
    cfg.jobs = top.int_opt("jobs", 1);
    if (cfg.jobs < 1) range_error("/jobs", "must be >= 1");
    cfg.output_dir = top.str_opt("output_dir", "");
    cfg.ensemble = parse_ensemble(top.need("ensemble"), "/ensemble");
    cfg.solver = parse_solver(top.find("solver"), "/solver");
    parse_bands(top, cfg);

    switch (cfg.experiment) {
    case Experiment::AnnealedMoments: {
        cfg.mu = top.num_req("mu");
        if (cfg.mu <= 0.0) range_error("/mu", "must be > 0");
        cfg.radii = top.int_list_req("radii");
        require_increasing(cfg.radii, "/radii", 3);
        if (cfg.radii.size() < 3) range_error("/radii", "need at least 3 radii for the fits");
        cfg.q_list = top.num_list_opt("q_list", {1.0, 2.0, 4.0, 8.0});
        cfg.samples = top.int_req("samples");
        if (cfg.samples < 50) range_error("/samples", "must be >= 50");
        const std::string rh = top.str_opt("rate_handling", "pinned");
        if (rh == "zero") cfg.rate_handling = RateHandling::Zero;
        else if (rh == "pinned") cfg.rate_handling = RateHandling::Pinned;
        else if (rh == "joint") cfg.rate_handling = RateHandling::Joint;
        else range_error("/rate_handling", "expected 'zero', 'pinned' or 'joint'");
        cfg.beta = top.num("beta", 0.5);
        if (cfg.beta <= 0.0) range_error("/beta", "must be > 0");
        break;
    }
    case Experiment::DeterministicBounds: {
        cfg.mu = top.num_req("mu");
        if (cfg.mu <= 0.0) range_error("/mu", "must be > 0");
        cfg.radii = top.int_list_req("radii");
        require_increasing(cfg.radii, "/radii", 1);
        if (cfg.radii.size() < 2) range_error("/radii", "need at least 2 radii");
        cfg.samples = top.int_opt("samples", 8);
        if (cfg.samples < 1) range_error("/samples", "must be >= 1");
        cfg.box_radius = top.int_opt("box_radius", 0);
        if (cfg.box_radius < 0) range_error("/box_radius", "must be >= 0");
        break;
    }
    case Experiment::Sensitivity: {
        cfg.mu = top.num("mu", 1.0);
        if (cfg.mu <= 0.0) range_error("/mu", "must be > 0");
        cfg.samples = top.int_req("samples");
        if (cfg.samples < 1) range_error("/samples", "must be >= 1");
        cfg.box_radius = top.int_opt("box_radius", 0);
        cfg.n_random_patches = top.int_opt("random_patches", 6);
        if (cfg.n_random_patches < 0) range_error("/random_patches", "must be >= 0");
        cfg.lambda2 = top.num("lambda2", 2.0);
        if (cfg.lambda2 <= cfg.dim / 2.0)
            range_error("/lambda2", "lambda2 > d/2 required, got " +
                                        std::to_string(cfg.lambda2));
        cfg.rhs_kind = top.str_opt("rhs", "bump");
        if (cfg.rhs_kind != "bump" && cfg.rhs_kind != "delta" && cfg.rhs_kind != "constant")
            range_error("/rhs", "expected 'bump', 'delta' or 'constant'");
        const json& pj = top.need("pairs");
        if (!pj.is_array() || pj.empty())
            throw ConfigError("/pairs: expected a nonempty array of [x, z] pairs");
        for (std::size_t i = 0; i < pj.size(); ++i) {
            const std::string pp = "/pairs/" + std::to_string(i);
            if (!pj[i].is_array() || pj[i].size() != 2)
                throw ConfigError(pp + ": expected [x, z]");
            cfg.pairs.emplace_back(parse_coord(pj[i][0], cfg.dim, pp + "/0"),
                                   parse_coord(pj[i][1], cfg.dim, pp + "/1"));
        }
        break;
    }
    case Experiment::SpectralGap: {
        cfg.mu = top.num("mu", 1.0);
        if (cfg.mu <= 0.0) range_error("/mu", "must be > 0");
        cfg.samples = top.int_req("samples");
        if (cfg.samples < 2) range_error("/samples", "must be >= 2");
        cfg.box_radius = top.int_req("box_radius");
        if (cfg.box_radius < 2) range_error("/box_radius", "must be >= 2");
        cfg.n_batches = top.int_opt("batches", 1);
        if (cfg.n_batches < 1) range_error("/batches", "must be >= 1");
        cfg.n_random_patches = top.int_opt("random_patches", 2);
        if (cfg.n_random_patches < 0) range_error("/random_patches", "must be >= 0");
        cfg.rhs_kind = top.str_opt("rhs", "bump");
        if (cfg.rhs_kind != "bump" && cfg.rhs_kind != "delta" && cfg.rhs_kind != "constant")
            range_error("/rhs", "expected 'bump', 'delta' or 'constant'");
        const json& fj = top.need("functional");
        Obj fo(fj, "/functional");
        const std::string fk = fo.str_req("kind");
        if (fk == "single_edge") cfg.functional.kind = GapFunctional::Kind::SingleEdge;
        else if (fk == "point_value") cfg.functional.kind = GapFunctional::Kind::PointValue;
        else if (fk == "ball_average") cfg.functional.kind = GapFunctional::Kind::BallAverage;
        else range_error("/functional/kind",
                         "expected 'single_edge', 'point_value' or 'ball_average'");
        if (fo.has("site")) cfg.functional.site = parse_coord(fo.need("site"), cfg.dim,
                                                              "/functional/site");
        else cfg.functional.site = Coord{};
        cfg.functional.axis = fo.int_opt("axis", 0);
        if (cfg.functional.axis < 0 || cfg.functional.axis >= cfg.dim)
            range_error("/functional/axis", "must name a lattice axis");
        cfg.functional.ball_radius = fo.num("ball_radius", 1.0);
        if (cfg.functional.ball_radius < 1.0)
            range_error("/functional/ball_radius", "must be >= 1");
        fo.finish();
        break;
    }
    case Experiment::StrongFluct:
    case Experiment::WeakFluct: {
        const bool strong = cfg.experiment == Experiment::StrongFluct;
        FluctuationConfig& fc = cfg.fluct;
        fc.dim = cfg.dim;
        fc.ensemble = cfg.ensemble;
        fc.solver = cfg.solver;
        fc.sizes = top.int_list_req("sizes");
        fc.mu_macro = top.num("mu_macro", 1.0);
        fc.p = top.num("p", 2.0);
        fc.theta = top.num("theta", strong ? 1.0 : 2.0);
        fc.q = top.num("q", 4.0 / 3.0);
        fc.r = top.num("r", 4.0 / 3.0);
        fc.q_tilde = top.num("q_tilde", 2.0);
        fc.r_tilde = top.num("r_tilde", 2.0);
        fc.lambda = top.num("lambda", 2.0);
        fc.lambda1 = top.num("lambda1", 2.0);
        fc.lambda2 = top.num("lambda2", 2.0);
        fc.rhs_profile = parse_profile(top, "rhs_profile", Profile::Bump);
        fc.g_profile = parse_profile(top, "g_profile", Profile::PlaneWave);
        fc.n_samples = top.int_req("samples");
        cfg.samples = fc.n_samples;
        try {
            if (strong) validate_strong(fc);
            else validate_weak(fc);
        } catch (const std::exception& ex) {
            range_error("/" + exp, ex.what());
        }
        break;
    }
    case Experiment::LipschitzScan: {
        cfg.R_list = top.int_list_req("R_list");
        require_increasing(cfg.R_list, "/R_list", 4);
        if (cfg.R_list.size() < 2) range_error("/R_list", "need at least 2 radii");
        cfg.q_exp = top.num("q", 2.0);
        cfg.p_exp = top.num("p", static_cast<double>(cfg.dim) + 1.0);
        if (cfg.p_exp <= cfg.dim)
            range_error("/p", "p > d required, got " + std::to_string(cfg.p_exp));
        if (cfg.q_exp < 1.0) range_error("/q", "must be >= 1");
        cfg.samples = top.int_req("samples");
        if (cfg.samples < 20) range_error("/samples", "must be >= 20");
        break;
    }
    }
    top.finish();
    cfg.fluct.jobs = cfg.jobs;
    cfg.canonical = canonical_text(cfg);
    return cfg;
}

// canonical echo: effective values only, fixed key set, sorted dump; jobs and
// output_dir are deliberately excluded (pure throughput / location knobs)
std::string canonical_text(const ExperimentConfig& cfg) {
    json canon;
    canon["experiment"] = experiment_name(cfg.experiment);
    canon["dim"] = cfg.dim;
    canon["master_seed"] = cfg.master_seed;
    {
        json e;
        const EnsembleSpec& en = cfg.ensemble;
        switch (en.kind) {
        case EnsembleSpec::Kind::Constant:
            e = {{"kind", "constant"}, {"lambda", en.lambda}};
            break;
        case EnsembleSpec::Kind::Checkerboard:
            e = {{"kind", "checkerboard"}, {"lambda", en.lambda}, {"lo", en.lo},
                 {"hi", en.hi},            {"p_hi", en.p_hi}};
            break;
        case EnsembleSpec::Kind::PoissonInclusions:
            e = {{"kind", "poisson"},
                 {"lambda", en.lambda},
                 {"intensity", en.intensity},
                 {"inclusion_radius", en.inclusion_radius},
                 {"background", en.background},
                 {"inclusion_value", en.inclusion_value}};
            break;
        }
        e["lsi_rho"] = en.lsi_rho;
        canon["ensemble"] = e;
    }
    canon["solver"] = {{"tolerance", cfg.solver.tolerance},
                       {"max_iterations", cfg.solver.max_iterations},
                       {"jacobi", cfg.solver.jacobi}};
    switch (cfg.experiment) {
    case Experiment::AnnealedMoments:
        canon["mu"] = cfg.mu;
        canon["radii"] = cfg.radii;
        canon["q_list"] = cfg.q_list;
        canon["samples"] = cfg.samples;
        canon["rate_handling"] = cfg.rate_handling == RateHandling::Zero     ? "zero"
                                 : cfg.rate_handling == RateHandling::Pinned ? "pinned"
                                                                             : "joint";
        canon["beta"] = cfg.beta;
        break;
    case Experiment::DeterministicBounds:
        canon["mu"] = cfg.mu;
        canon["radii"] = cfg.radii;
        canon["samples"] = cfg.samples;
        canon["box_radius"] = cfg.box_radius;
        break;
    case Experiment::Sensitivity: {
        canon["mu"] = cfg.mu;
        canon["samples"] = cfg.samples;
        canon["box_radius"] = cfg.box_radius;
        canon["random_patches"] = cfg.n_random_patches;
        canon["lambda2"] = cfg.lambda2;
        canon["rhs"] = cfg.rhs_kind;
        json pl = json::array();
        for (const auto& [x, z] : cfg.pairs) {
            json px = json::array(), pz = json::array();
            for (int k = 0; k < cfg.dim; ++k) {
                px.push_back(x[static_cast<std::size_t>(k)]);
                pz.push_back(z[static_cast<std::size_t>(k)]);
            }
            pl.push_back(json::array({px, pz}));
        }
        canon["pairs"] = pl;
        break;
    }
    case Experiment::SpectralGap: {
        canon["mu"] = cfg.mu;
        canon["samples"] = cfg.samples;
        canon["box_radius"] = cfg.box_radius;
        canon["batches"] = cfg.n_batches;
        canon["random_patches"] = cfg.n_random_patches;
        canon["rhs"] = cfg.rhs_kind;
        json site = json::array();
        for (int k = 0; k < cfg.dim; ++k)
            site.push_back(cfg.functional.site[static_cast<std::size_t>(k)]);
        canon["functional"] = {
            {"kind", cfg.functional.kind == GapFunctional::Kind::SingleEdge ? "single_edge"
                     : cfg.functional.kind == GapFunctional::Kind::PointValue
                         ? "point_value"
                         : "ball_average"},
            {"site", site},
            {"axis", cfg.functional.axis},
            {"ball_radius", cfg.functional.ball_radius}};
        break;
    }
    case Experiment::StrongFluct:
    case Experiment::WeakFluct:
        canon["sizes"] = cfg.fluct.sizes;
        canon["mu_macro"] = cfg.fluct.mu_macro;
        canon["p"] = cfg.fluct.p;
        canon["theta"] = cfg.fluct.theta;
        canon["q"] = cfg.fluct.q;
        canon["r"] = cfg.fluct.r;
        canon["q_tilde"] = cfg.fluct.q_tilde;
        canon["r_tilde"] = cfg.fluct.r_tilde;
        canon["lambda"] = cfg.fluct.lambda;
        canon["lambda1"] = cfg.fluct.lambda1;
        canon["lambda2"] = cfg.fluct.lambda2;
        canon["rhs_profile"] = cfg.fluct.rhs_profile == Profile::Bump ? "bump" : "plane_wave";
        canon["g_profile"] = cfg.fluct.g_profile == Profile::Bump ? "bump" : "plane_wave";
        canon["samples"] = cfg.samples;
        break;
    case Experiment::LipschitzScan:
        canon["R_list"] = cfg.R_list;
        canon["q"] = cfg.q_exp;
        canon["p"] = cfg.p_exp;
        canon["samples"] = cfg.samples;
        break;
    }
    if (!cfg.bands.empty()) canon["bands"] = cfg.bands;
    return canon.dump();
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string run_id(const ExperimentConfig& cfg) {
    const std::string material = canonical_text(cfg) + "|" + kToolVersion;
    std::uint64_t h = 1469598103934665603ull;
    for (const unsigned char c : material) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return std::string(buf);
}

} // namespace homlab
