#pragma once

// Configuration-driven runs. A config is an INI file with sections
// [experiment], [dna], [sim], [grid], [quad] and [init]; a preset fills in
// defaults, pins the fields its figure fixes and expands into sweep members.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include "coopevo/coefficients.hpp"
#include "coopevo/diagnostics.hpp"
#include "coopevo/error.hpp"
#include "coopevo/grid.hpp"
#include "coopevo/io.hpp"
#include "coopevo/solver.hpp"
#include "coopevo/spectral.hpp"

namespace coopevo {

enum class Preset { Fig3Ratio, Fig4EpsSweep, Fig5DSweep, Fig6PStable, Fig7PVarying, LandscapeX, LandscapeP, Custom };
enum class Profile { Desk, Full };
enum class Environment { Stable, Cos8 };
enum class InitKind { Gaussian, HopfColeGaussian };

inline const char* to_string(Preset p) {
    switch (p) {
    case Preset::Fig3Ratio: return "fig3_ratio";
    case Preset::Fig4EpsSweep: return "fig4_eps_sweep";
    case Preset::Fig5DSweep: return "fig5_dsweep";
    case Preset::Fig6PStable: return "fig6_p_stable";
    case Preset::Fig7PVarying: return "fig7_p_varying";
    case Preset::LandscapeX: return "landscape_x";
    case Preset::LandscapeP: return "landscape_p";
    case Preset::Custom: return "custom";
    }
    return "custom";
}

inline const char* to_string(Profile p) { return p == Profile::Desk ? "desk" : "full"; }
inline const char* to_string(Environment e) { return e == Environment::Stable ? "stable" : "cos8"; }
inline const char* to_string(InitKind k) { return k == InitKind::Gaussian ? "gaussian" : "hopf_cole_gaussian"; }

inline Preset parse_preset(const std::string& s) {
    for (auto p : {Preset::Fig3Ratio, Preset::Fig4EpsSweep, Preset::Fig5DSweep, Preset::Fig6PStable,
                   Preset::Fig7PVarying, Preset::LandscapeX, Preset::LandscapeP, Preset::Custom})
        if (s == to_string(p)) return p;
    fail(ErrorKind::ConfigParse, "unknown preset '" + s + "'");
}

inline Profile parse_profile(const std::string& s) {
    if (s == "desk") return Profile::Desk;
    if (s == "full") return Profile::Full;
    fail(ErrorKind::ConfigParse, "unknown profile '" + s + "' (expected desk or full)");
}

inline std::function<double(double)> environment_function(Environment e) {
    if (e == Environment::Cos8) return cos8_environment;
    return {};
}

struct InitConfig {
    InitKind kind = InitKind::Gaussian;
    double center = 3.5;
    double width = 1.0;
    double amplitude = 0.2;
    double a = 0.2;
    double c = 0.0;

    InitialDatum datum() const {
        if (kind == InitKind::Gaussian) return GaussianInit{center, width, amplitude};
        return HopfColeGaussianInit{a, c, center};
    }
};

/// One run of a sweep. Unset optionals inherit from the config.
struct SweepMember {
    std::string label;
    std::optional<double> epsilon, d1, d2, x_fixed;
    std::optional<Environment> environment;
};

struct ExperimentConfig {
    Preset preset = Preset::Custom;
    Profile profile = Profile::Desk;
    std::string run_id = "run";
    std::string out_dir = "out";
    double window = 0.5;
    std::size_t series_stride = 0;  // 0 = automatic, at most ~20000 rows
    std::size_t snapshots = 10;     // evenly spaced snapshots besides the initial one

    DnaParams dna;
    Environment environment = Environment::Stable;
    SimConfig sim;
    double x_max = 10.0;
    std::size_t nx = 2001;
    QuadratureSpec quad = default_quadrature(DnaParams{}.gamma_d);
    InitConfig init;

    std::vector<SweepMember> members;
    std::set<std::string> explicit_keys;

    Grid grid() const { return make_grid(x_max, nx); }
};

// ---------------------------------------------------------------------------
// Key table

namespace detail {

inline std::string join_numbers(const std::vector<double>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + format_number(v[k]);
    return out;
}

inline double parse_double(const std::string& key, const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::ConfigParse, key + ": expected a number, got '" + s + "'");
    }
    while (used < s.size() && std::isspace(static_cast<unsigned char>(s[used]))) ++used;
    if (used != s.size()) fail(ErrorKind::ConfigParse, key + ": trailing characters in '" + s + "'");
    return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& s) {
    const double v = parse_double(key, s);
    if (v < 0.0 || v != std::floor(v) || v > 1e15) fail(ErrorKind::ConfigParse, key + ": expected a count");
    return static_cast<std::size_t>(v);
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail(ErrorKind::ConfigParse, key + ": expected true or false");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t"));
        cell.erase(cell.find_last_not_of(" \t") + 1);
        if (!cell.empty()) out.push_back(parse_double(key, cell));
    }
    return out;
}

struct KeySpec {
    std::string name;  // "section.key"
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

#define COOPEVO_NUM(key, member)                                                                      \
    KeySpec {                                                                                         \
        key, [](ExperimentConfig& c, const std::string& s) { c.member = parse_double(key, s); },       \
            [](const ExperimentConfig& c) { return format_number(c.member); }                         \
    }
#define COOPEVO_COUNT(key, member)                                                                    \
    KeySpec {                                                                                         \
        key, [](ExperimentConfig& c, const std::string& s) { c.member = parse_count(key, s); },        \
            [](const ExperimentConfig& c) { return std::to_string(c.member); }                        \
    }

inline const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> table{
        {"experiment.preset", [](ExperimentConfig& c, const std::string& s) { c.preset = parse_preset(s); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.preset)); }},
        {"experiment.profile", [](ExperimentConfig& c, const std::string& s) { c.profile = parse_profile(s); },
         [](const ExperimentConfig& c) { return std::string(to_string(c.profile)); }},
        {"experiment.run_id",
         [](ExperimentConfig& c, const std::string& s) {
             if (s.empty() || s.find_first_of("/\\") != std::string::npos)
                 fail(ErrorKind::ConfigParse, "experiment.run_id must be a non-empty file-name stem");
             c.run_id = s;
         },
         [](const ExperimentConfig& c) { return c.run_id; }},
        {"experiment.out_dir", [](ExperimentConfig& c, const std::string& s) { c.out_dir = s; },
         [](const ExperimentConfig& c) { return c.out_dir; }},
        COOPEVO_NUM("experiment.window", window),
        COOPEVO_COUNT("experiment.series_stride", series_stride),
        COOPEVO_COUNT("experiment.snapshots", snapshots),

        COOPEVO_NUM("dna.alpha_m", dna.alpha_m),
        COOPEVO_NUM("dna.mu_a", dna.mu_a),
        COOPEVO_NUM("dna.sigma", dna.sigma),
        COOPEVO_NUM("dna.beta_m", dna.beta_m),
        COOPEVO_NUM("dna.p", dna.p_fixed),
        COOPEVO_NUM("dna.x", dna.x_fixed),
        COOPEVO_NUM("dna.gamma_d", dna.gamma_d),
        COOPEVO_NUM("dna.gamma_a", dna.gamma_a),
        COOPEVO_NUM("dna.delta", dna.delta),
        COOPEVO_NUM("dna.D", dna.damage),
        {"dna.variable",
         [](ExperimentConfig& c, const std::string& s) {
             if (s == "x") c.dna.variable = TraitVariable::X;
             else if (s == "p") c.dna.variable = TraitVariable::P;
             else fail(ErrorKind::ConfigParse, "dna.variable must be x or p");
         },
         [](const ExperimentConfig& c) { return std::string(to_string(c.dna.variable)); }},

        COOPEVO_NUM("sim.epsilon", sim.epsilon),
        COOPEVO_NUM("sim.d1", sim.d1),
        COOPEVO_NUM("sim.d2", sim.d2),
        COOPEVO_NUM("sim.dt", sim.dt),
        COOPEVO_NUM("sim.t_end", sim.t_end),
        COOPEVO_NUM("sim.positivity_tol", sim.positivity_tol),
        COOPEVO_NUM("sim.mass_tol", sim.mass_tol),
        COOPEVO_NUM("sim.burn_in", sim.burn_in),
        {"sim.allow_any_step_ratio",
         [](ExperimentConfig& c, const std::string& s) {
             c.sim.allow_any_step_ratio = parse_bool("sim.allow_any_step_ratio", s);
         },
         [](const ExperimentConfig& c) { return std::string(c.sim.allow_any_step_ratio ? "true" : "false"); }},
        {"sim.snapshot_times",
         [](ExperimentConfig& c, const std::string& s) { c.sim.record_times = parse_list("sim.snapshot_times", s); },
         [](const ExperimentConfig& c) { return join_numbers(c.sim.record_times); }},
        {"sim.environment",
         [](ExperimentConfig& c, const std::string& s) {
             if (s == "stable") c.environment = Environment::Stable;
             else if (s == "cos8") c.environment = Environment::Cos8;
             else fail(ErrorKind::ConfigParse, "sim.environment must be stable or cos8");
         },
         [](const ExperimentConfig& c) { return std::string(to_string(c.environment)); }},

        COOPEVO_NUM("grid.x_max", x_max),
        COOPEVO_COUNT("grid.nx", nx),

        {"quad.rule",
         [](ExperimentConfig& c, const std::string& s) {
             if (s == "simpson") c.quad.rule = QuadratureRule::Simpson;
             else if (s == "trapezoid") c.quad.rule = QuadratureRule::Trapezoid;
             else fail(ErrorKind::ConfigParse, "quad.rule must be simpson or trapezoid");
         },
         [](const ExperimentConfig& c) { return std::string(to_string(c.quad.rule)); }},
        COOPEVO_NUM("quad.s_max", quad.s_max),
        COOPEVO_COUNT("quad.ns", quad.ns),
        COOPEVO_NUM("quad.tail_tol", quad.tail_tol),

        {"init.kind",
         [](ExperimentConfig& c, const std::string& s) {
             if (s == "gaussian") c.init.kind = InitKind::Gaussian;
             else if (s == "hopf_cole_gaussian") c.init.kind = InitKind::HopfColeGaussian;
             else fail(ErrorKind::ConfigParse, "init.kind must be gaussian or hopf_cole_gaussian");
         },
         [](const ExperimentConfig& c) { return std::string(to_string(c.init.kind)); }},
        COOPEVO_NUM("init.center", init.center),
        COOPEVO_NUM("init.width", init.width),
        COOPEVO_NUM("init.amplitude", init.amplitude),
        COOPEVO_NUM("init.a", init.a),
        COOPEVO_NUM("init.c", init.c),
    };
    return table;
}

#undef COOPEVO_NUM
#undef COOPEVO_COUNT

inline const KeySpec& key_spec(const std::string& name) {
    for (const auto& k : key_table())
        if (k.name == name) return k;
    fail(ErrorKind::ConfigParse, "unknown key '" + name + "'");
}

/// A pinned field: a fixed value, or nullopt when the preset sweeps it.
struct Forced {
    std::string key;
    std::optional<std::string> value;
};

inline std::vector<Forced> forced_fields(Preset p) {
    switch (p) {
    case Preset::Fig3Ratio:
        return {{"dna.variable", "x"},       {"sim.d1", "1"},         {"sim.d2", "1"},
                {"init.kind", "gaussian"},   {"init.center", "3"},    {"init.width", "10"},
                {"init.amplitude", "0.2"},   {"sim.t_end", "0.699"},  {"sim.environment", "stable"}};
    case Preset::Fig4EpsSweep:
        return {{"dna.variable", "x"}, {"dna.p", "3"}, {"sim.d1", "1"}, {"sim.d2", "1"},
                {"sim.epsilon", std::nullopt}, {"sim.environment", "stable"}};
    case Preset::Fig5DSweep:
        return {{"dna.variable", "x"}, {"dna.p", "3"},          {"sim.epsilon", "0.001"},
                {"sim.d1", std::nullopt}, {"sim.d2", std::nullopt}, {"sim.environment", "stable"}};
    case Preset::Fig6PStable:
        return {{"dna.variable", "p"}, {"dna.x", "2"}, {"sim.epsilon", std::nullopt}, {"sim.environment", "stable"}};
    case Preset::Fig7PVarying:
        return {{"dna.variable", "p"}, {"dna.x", "2"},         {"sim.d1", "1"},
                {"sim.d2", "1"},       {"sim.epsilon", "0.001"}, {"sim.environment", std::nullopt}};
    case Preset::LandscapeX: return {{"dna.variable", "x"}, {"dna.p", "3"}};
    case Preset::LandscapeP: return {{"dna.variable", "p"}, {"dna.x", std::nullopt}};
    case Preset::Custom: return {};
    }
    return {};
}

inline std::vector<SweepMember> preset_members(Preset p) {
    auto label_eps = [](double e) { return "eps_" + format_time_tag(e); };
    switch (p) {
    case Preset::Fig4EpsSweep: {
        std::vector<SweepMember> m;
        for (double e : {0.05, 0.01, 0.001, 0.0001}) m.push_back({label_eps(e), e, {}, {}, {}, {}});
        return m;
    }
    case Preset::Fig5DSweep: {
        std::vector<SweepMember> m;
        for (auto [a, b] : {std::pair{1.0, 1.0}, {0.5, 1.5}, {0.05, 1.95}, {0.0, 2.0}})
            m.push_back({"d_" + format_time_tag(a) + "_" + format_time_tag(b), {}, a, b, {}, {}});
        return m;
    }
    case Preset::Fig6PStable: return {{label_eps(0.01), 0.01, {}, {}, {}, {}}, {label_eps(0.001), 0.001, {}, {}, {}, {}}};
    case Preset::Fig7PVarying:
        return {{"stable", {}, {}, {}, {}, Environment::Stable}, {"varying", {}, {}, {}, {}, Environment::Cos8}};
    case Preset::LandscapeP: return {{"xbar_2", {}, {}, {}, 2.0, {}}, {"xbar_20", {}, {}, {}, 20.0, {}}};
    default: return {{"main", {}, {}, {}, {}, {}}};
    }
}

inline bool is_simulation(Preset p) { return p != Preset::LandscapeX && p != Preset::LandscapeP; }

/// Preset and profile defaults that a config file may override.
inline void apply_defaults(ExperimentConfig& c) {
    c.nx = c.profile == Profile::Desk ? 1001 : 2001;
    switch (c.preset) {
    case Preset::Fig3Ratio:
        c.sim.epsilon = 0.01;
        c.sim.dt = 0.001;
        break;
    case Preset::Fig4EpsSweep:
    case Preset::Fig5DSweep:
        c.sim.t_end = c.profile == Profile::Desk ? 50.0 : 100.0;
        break;
    case Preset::Fig6PStable:
    case Preset::Fig7PVarying:
        c.sim.t_end = c.profile == Profile::Desk ? 50.0 : (c.preset == Preset::Fig7PVarying ? 300.0 : 100.0);
        c.init.kind = InitKind::HopfColeGaussian;
        c.init.a = 0.2;
        c.init.c = 0.0;
        c.init.center = 5.0;
        break;
    default: break;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loading and serialization

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline KeyValues parse_ini_text(const std::string& text) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        fail(ErrorKind::ConfigParse, e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    KeyValues kv;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            fail(ErrorKind::ConfigParse, "key '" + section + "' outside a section");
        for (const auto& [key, value] : body) kv.emplace_back(section + "." + key, value.data());
    }
    return kv;
}

struct LoadOptions {
    std::optional<Preset> preset;
    std::optional<Profile> profile;
    std::optional<std::string> out_dir;
};

/// Builds a validated config from key/value pairs: preset defaults first,
/// then the given keys, then the preset's pinned fields (a differing explicit
/// value is a conflict).
inline ExperimentConfig load_config(const KeyValues& kv, const LoadOptions& opts = {}) {
    std::map<std::string, std::string> given;
    for (const auto& [k, v] : kv) {
        detail::key_spec(k);
        if (!given.emplace(k, v).second) fail(ErrorKind::ConfigParse, "duplicate key '" + k + "'");
    }

    ExperimentConfig c;
    if (auto it = given.find("experiment.preset"); it != given.end()) c.preset = parse_preset(it->second);
    if (opts.preset) {
        if (given.count("experiment.preset") && c.preset != *opts.preset)
            throw ConfigConflictError("experiment.preset", "config says " + std::string(to_string(c.preset)) +
                                                               ", command line says " + to_string(*opts.preset));
        c.preset = *opts.preset;
    }
    if (auto it = given.find("experiment.profile"); it != given.end()) c.profile = parse_profile(it->second);
    if (opts.profile) c.profile = *opts.profile;
    detail::apply_defaults(c);

    const bool quad_given = std::any_of(given.begin(), given.end(), [](const auto& e) { return e.first.rfind("quad.", 0) == 0; });
    for (const auto& [k, v] : given) {
        if (k == "experiment.preset" || k == "experiment.profile") continue;
        detail::key_spec(k).set(c, v);
        c.explicit_keys.insert(k);
    }
    c.explicit_keys.insert("experiment.preset");
    if (opts.out_dir) c.out_dir = *opts.out_dir;

    for (const auto& f : detail::forced_fields(c.preset)) {
        const auto& spec = detail::key_spec(f.key);
        const bool set = given.count(f.key) > 0;
        if (!f.value) {
            if (set) throw ConfigConflictError(f.key, std::string("swept by preset ") + to_string(c.preset));
            continue;
        }
        ExperimentConfig pinned = c;
        spec.set(pinned, *f.value);
        if (set && spec.get(c) != spec.get(pinned))
            throw ConfigConflictError(f.key, "preset " + std::string(to_string(c.preset)) + " fixes it to " +
                                                 *f.value + ", config sets " + given.at(f.key));
        spec.set(c, *f.value);
    }

    // Quadrature follows gamma_d unless given explicitly.
    if (!quad_given) c.quad = default_quadrature(c.dna.gamma_d);

    c.members = detail::preset_members(c.preset);

    c.dna.validate();
    c.quad.validate();
    make_grid(c.x_max, c.nx);
    if (!(c.window >= 0.0)) fail(ErrorKind::InvalidArgument, "experiment.window must be non-negative");
    if (detail::is_simulation(c.preset)) {
        for (const auto& m : c.members) {
            SimConfig s = c.sim;
            if (m.epsilon) s.epsilon = *m.epsilon;
            if (m.d1) s.d1 = *m.d1;
            if (m.d2) s.d2 = *m.d2;
            s.validate();
        }
        for (double t : c.sim.record_times)
            if (!(t >= 0.0) || t > c.sim.t_end * (1.0 + 1e-12))
                fail(ErrorKind::InvalidArgument, "snapshot time " + format_number(t) + " outside [0, t_end]");
    }
    return c;
}

inline ExperimentConfig load_config_text(const std::string& text, const LoadOptions& opts = {}) {
    return load_config(parse_ini_text(text), opts);
}

inline ExperimentConfig load_config_file(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return load_config_text(ss.str(), opts);
}

/// Every key the preset does not pin, grouped by section, in table order.
/// Loading the result gives back the same config.
inline std::string serialize_config(const ExperimentConfig& c) {
    std::set<std::string> pinned;
    for (const auto& f : detail::forced_fields(c.preset)) pinned.insert(f.key);
    std::string out, section;
    for (const auto& k : detail::key_table()) {
        if (pinned.count(k.name)) continue;
        const auto dot = k.name.find('.');
        const std::string sec = k.name.substr(0, dot);
        if (sec != section) {
            out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
            section = sec;
        }
        out += k.name.substr(dot + 1) + " = " + k.get(c) + "\n";
    }
    return out;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : detail::key_table()) {
        const auto dot = k.name.find('.');
        j[k.name.substr(0, dot)][k.name.substr(dot + 1)] = k.get(c);
    }
    return j;
}

// ---------------------------------------------------------------------------
// Running

class HypothesisError : public Error {
public:
    HypothesisError(const std::string& what, HypothesisReport report)
        : Error(ErrorKind::HypothesisFailure, what), report_(std::move(report)) {}
    const HypothesisReport& report() const noexcept { return report_; }

private:
    HypothesisReport report_;
};

inline nlohmann::json report_json(const HypothesisReport& r) {
    nlohmann::json j{{"h1_ok", r.h1_ok}, {"h2_ok", r.h2_ok}, {"h3_ok", r.h3_ok}, {"c_N", r.c_N},
                     {"C_N", r.C_N},     {"r_sup", r.r_sup}, {"delta_sup", r.delta_sup}};
    if (r.analytic)
        j["analytic"] = {{"c_N_gamma_a", r.analytic->c_N_gamma_a},
                         {"c_N_delta", r.analytic->c_N_delta},
                         {"C_N", r.analytic->C_N}};
    auto& v = j["violations"] = nlohmann::json::array();
    for (const auto& x : r.violations)
        v.push_back({{"hypothesis", x.hypothesis},
                     {"node", x.node == static_cast<std::size_t>(-1) ? nlohmann::json(nullptr) : nlohmann::json(x.node)},
                     {"detail", x.detail}});
    return j;
}

struct MemberSummary {
    std::string label;
    std::string run_id;
    double epsilon = 0.0, d1 = 0.0, d2 = 0.0;
    Environment environment = Environment::Stable;
    double trait_fixed = 0.0;
    double landscape_argmax = 0.0;
    double landscape_max = 0.0;
    // simulation only
    double final_N = 0.0;
    double final_argmax_x = 0.0;
    double half_argmax_x = 0.0;
    double final_conc_x = 0.0;
    double final_conc_fraction = 0.0;
    double final_fwhm = 0.0;
    double final_ratio_dev = 0.0;
    double initial_ratio_dev = 0.0;
    double positive_variation = 0.0;
    double negative_variation = 0.0;
    std::size_t mass_excursions = 0;
    bool boundary_warning = false;
    double wall_time_s = 0.0;
    std::vector<std::string> files;
};

struct MemberResult {
    MemberSummary summary;
    HypothesisReport hypotheses;
    std::optional<Trajectory> trajectory;
    std::shared_ptr<const CoefficientField> field;
};

struct RunResult {
    std::filesystem::path manifest_path;
    nlohmann::json manifest;
    std::vector<MemberResult> members;
};

struct RunOptions {
    unsigned workers = 1;
    bool keep_trajectories = false;
    bool write_files = true;
};

namespace detail {

inline DnaParams member_dna(const ExperimentConfig& c, const SweepMember& m) {
    DnaParams p = c.dna;
    if (m.x_fixed) p.x_fixed = *m.x_fixed;
    return p;
}

inline MemberResult run_member(const ExperimentConfig& c, const SweepMember& m, const RunOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    const Grid grid = c.grid();
    const DnaParams dna = member_dna(c, m);
    const Environment env = m.environment.value_or(c.environment);
    SimConfig sim = c.sim;
    if (m.epsilon) sim.epsilon = *m.epsilon;
    if (m.d1) sim.d1 = *m.d1;
    if (m.d2) sim.d2 = *m.d2;

    auto field = std::make_shared<CoefficientField>(build_dna_coefficients(dna, grid, c.quad, environment_function(env)));
    MemberResult r;
    r.field = field;
    r.hypotheses = check_hypotheses(*field, sim.d1, sim.d2, {1.5, &dna});

    auto& s = r.summary;
    s.label = m.label;
    s.run_id = c.members.size() == 1 ? c.run_id : c.run_id + "_" + m.label;
    s.epsilon = sim.epsilon;
    s.d1 = sim.d1;
    s.d2 = sim.d2;
    s.environment = env;
    s.trait_fixed = dna.variable == TraitVariable::X ? dna.p_fixed : dna.x_fixed;

    if (is_simulation(c.preset) && !r.hypotheses.ok()) {
        std::string what = "hypotheses fail for member " + m.label;
        for (const auto& v : r.hypotheses.violations) what += "; " + v.hypothesis + ": " + v.detail;
        throw HypothesisError(what, r.hypotheses);
    }

    const std::filesystem::path dir(c.out_dir);
    CoefficientField stable = *field;
    stable.env = {};
    const auto land = fitness_landscape(stable, {sim.d1, sim.d2});
    s.landscape_argmax = grid[land.argmax];
    s.landscape_max = land.r_h[land.argmax];
    if (opts.write_files) {
        const auto coef = s.run_id + "_coefficients.csv";
        const auto lf = s.run_id + "_landscape.csv";
        write_coefficients_csv(dir / coef, *field);
        write_landscape_csv(dir / lf, grid, land);
        s.files.push_back(coef);
        s.files.push_back(lf);
    }

    if (!is_simulation(c.preset)) {
        s.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        return r;
    }

    sim.mass_bounds = MassBounds{r.hypotheses.c_N, r.hypotheses.C_N};
    const std::size_t steps = sim.steps();
    if (c.snapshots > 0) sim.record_every = std::max<std::size_t>(1, steps / c.snapshots);
    const auto init = default_initial_state(grid, sim.epsilon, c.init.datum());
    auto traj = simulate(init, *field, sim, diagnostics_probe(*field, sim.d1, sim.d2, sim.epsilon, c.window));

    const auto& last = traj.series.back();
    const auto& final_state = traj.snapshots.back();
    s.final_N = last.N;
    s.final_argmax_x = last.argmax_x;
    s.half_argmax_x = traj.series[traj.series.size() / 2].argmax_x;
    s.final_conc_x = last.conc_x;
    s.final_conc_fraction = last.conc_fraction;
    s.final_fwhm = fwhm(final_state.n1, grid);
    s.final_ratio_dev = last.ratio_dev;
    s.initial_ratio_dev = traj.series.front().ratio_dev;
    const auto var = mass_variation(traj.series, sim.burn_in);
    s.positive_variation = var.positive;
    s.negative_variation = var.negative;
    s.mass_excursions = traj.mass_excursions.size();
    s.boundary_warning = traj.boundary_warning;

    if (opts.write_files) {
        const std::size_t stride = c.series_stride ? c.series_stride : std::max<std::size_t>(1, (steps + 19999) / 20000);
        const auto sf = s.run_id + "_series.csv";
        write_series_csv(dir / sf, traj.series, stride);
        s.files.push_back(sf);
        for (const auto& snap : traj.snapshots) {
            const auto name = s.run_id + "_snap_" + format_time_tag(snap.t) + ".csv";
            write_snapshot_csv(dir / name, grid, snap);
            s.files.push_back(name);
        }
    }
    if (opts.keep_trajectories) r.trajectory = std::move(traj);
    s.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
}

inline nlohmann::json summary_json(const MemberSummary& s, bool simulated) {
    nlohmann::json j{{"label", s.label},
                     {"run_id", s.run_id},
                     {"epsilon", s.epsilon},
                     {"d1", s.d1},
                     {"d2", s.d2},
                     {"environment", to_string(s.environment)},
                     {"trait_fixed", s.trait_fixed},
                     {"landscape_argmax", s.landscape_argmax},
                     {"landscape_max", s.landscape_max},
                     {"wall_time_s", s.wall_time_s},
                     {"files", s.files}};
    if (simulated) {
        j["final_N"] = s.final_N;
        j["final_argmax_x"] = s.final_argmax_x;
        j["half_argmax_x"] = s.half_argmax_x;
        j["final_conc_x"] = s.final_conc_x;
        j["final_conc_fraction"] = s.final_conc_fraction;
        j["final_fwhm"] = s.final_fwhm;
        j["initial_ratio_dev"] = s.initial_ratio_dev;
        j["final_ratio_dev"] = s.final_ratio_dev;
        j["positive_variation"] = s.positive_variation;
        j["negative_variation"] = s.negative_variation;
        j["mass_excursions"] = s.mass_excursions;
        j["boundary_warning"] = s.boundary_warning;
        j["series"] = s.run_id + "_series.csv";
    }
    return j;
}

}  // namespace detail

/// Runs every sweep member (in parallel up to opts.workers) and writes the
/// CSVs plus {run_id}_manifest.json into cfg.out_dir.
inline RunResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    const auto start = std::chrono::steady_clock::now();
    if (opts.write_files) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.out_dir, ec);
        if (ec) fail(ErrorKind::Io, "cannot create output directory " + cfg.out_dir + ": " + ec.message());
    }

    const std::size_t n = cfg.members.size();
    std::vector<std::optional<MemberResult>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            try {
                results[k] = detail::run_member(cfg, cfg.members[k], opts);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const unsigned workers = std::max(1u, std::min<unsigned>(opts.workers, static_cast<unsigned>(n)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    RunResult out;
    const bool simulated = detail::is_simulation(cfg.preset);
    nlohmann::json members = nlohmann::json::array();
    nlohmann::json files = nlohmann::json::array();
    for (auto& r : results) {
        members.push_back(detail::summary_json(r->summary, simulated));
        for (const auto& f : r->summary.files) files.push_back(f);
        out.members.push_back(std::move(*r));
    }
    const auto manifest_name = cfg.run_id + "_manifest.json";
    files.push_back(manifest_name);
    out.manifest = {{"run_id", cfg.run_id},
                    {"preset", to_string(cfg.preset)},
                    {"profile", to_string(cfg.profile)},
                    {"parameters", "calibrated defaults"},
                    {"config", config_json(cfg)},
                    {"grid", {{"x_max", cfg.x_max}, {"nx", cfg.nx}}},
                    {"hypotheses", report_json(out.members.front().hypotheses)},
                    {"members", members},
                    {"files", files},
                    {"wall_time_s", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
    out.manifest_path = std::filesystem::path(cfg.out_dir) / manifest_name;
    if (opts.write_files) {
        std::ofstream m(out.manifest_path);
        if (!m) fail(ErrorKind::Io, "cannot write " + out.manifest_path.string());
        m << out.manifest.dump(2) << '\n';
        if (!m) fail(ErrorKind::Io, "write to " + out.manifest_path.string() + " failed");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Comparison

inline nlohmann::json read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read manifest " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Io, "malformed manifest " + path.string() + ": " + e.what());
    }
}

struct RunTrack {
    std::string label;
    std::vector<double> t, argmax_x;
    double final_conc_x = 0.0;
};

inline RunTrack load_track(const std::filesystem::path& manifest_path, const nlohmann::json& manifest,
                           const std::string& label) {
    const auto& members = manifest.at("members");
    for (const auto& m : members) {
        if (!label.empty() && m.at("label") != label) continue;
        if (!m.contains("series")) fail(ErrorKind::InvalidArgument, "member has no simulation series");
        const auto cols = read_csv_columns(manifest_path.parent_path() / m.at("series").get<std::string>());
        RunTrack t;
        t.label = m.at("label");
        t.t = cols.at("t");
        t.argmax_x = cols.at("argmax_x");
        t.final_conc_x = m.at("final_conc_x");
        return t;
    }
    fail(ErrorKind::InvalidArgument, "no member '" + label + "' in " + manifest_path.string());
}

/// Argmax trajectories and final concentration points of two runs. The
/// late drift is argmax(t_end) - argmax(t_end / 2).
inline nlohmann::json compare_runs(const std::filesystem::path& path_a, const std::filesystem::path& path_b,
                                   const std::string& member_a = {}, const std::string& member_b = {}) {
    const auto ma = read_manifest(path_a);
    const auto mb = read_manifest(path_b);
    if (ma.at("grid") != mb.at("grid")) fail(ErrorKind::GridMismatch, "runs were computed on different grids");
    const double dx = ma.at("grid").at("x_max").get<double>() / (ma.at("grid").at("nx").get<double>() - 1.0);
    const auto a = load_track(path_a, ma, member_a);
    const auto b = load_track(path_b, mb, member_b);

    auto drift = [](const RunTrack& r) {
        const double t_half = 0.5 * r.t.back();
        std::size_t k = 0;
        while (k + 1 < r.t.size() && r.t[k] < t_half) ++k;
        return r.argmax_x.back() - r.argmax_x[k];
    };
    auto sign = [](double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); };
    double max_gap = 0.0;
    const std::size_t common = std::min(a.t.size(), b.t.size());
    for (std::size_t k = 0; k < common; ++k)
        if (a.t[k] == b.t[k]) max_gap = std::max(max_gap, std::abs(a.argmax_x[k] - b.argmax_x[k]));

    const double da = drift(a), db = drift(b);
    return {{"a", {{"label", a.label}, {"late_drift", da}, {"drift_sign", sign(da)},
                   {"final_argmax_x", a.argmax_x.back()}, {"final_conc_x", a.final_conc_x}}},
            {"b", {{"label", b.label}, {"late_drift", db}, {"drift_sign", sign(db)},
                   {"final_argmax_x", b.argmax_x.back()}, {"final_conc_x", b.final_conc_x}}},
            {"final_conc_gap_nodes", std::llround(std::abs(a.final_conc_x - b.final_conc_x) / dx)},
            {"max_argmax_gap", max_gap}};
}

}  // namespace coopevo
