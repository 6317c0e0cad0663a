// coopevo: run configured experiments, print landscapes, compare runs.
//
// Exit codes: 0 ok, 2 bad or conflicting config, 3 hypotheses fail,
// 4 numerical failure, 5 I/O.

#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "coopevo/experiments.hpp"

namespace {

int exit_code(coopevo::ErrorKind kind) {
    using coopevo::ErrorKind;
    switch (kind) {
    case ErrorKind::ConfigParse:
    case ErrorKind::ConfigConflict:
    case ErrorKind::InvalidArgument:
    case ErrorKind::GridMismatch: return 2;
    case ErrorKind::HypothesisFailure: return 3;
    case ErrorKind::NumericalDomain:
    case ErrorKind::PositivityFailure:
    case ErrorKind::NumericalBlowup:
    case ErrorKind::DegenerateState: return 4;
    case ErrorKind::Io: return 5;
    }
    return 1;
}

struct Common {
    std::string config;
    std::string preset;
    std::string profile;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("-c,--config", c.config, "INI config file");
    cmd->add_option("-p,--preset", c.preset, "preset name (overrides nothing; must agree with the config)");
    cmd->add_option("--profile", c.profile, "desk or full");
    cmd->add_option("-o,--out", c.out, "output directory");
}

coopevo::ExperimentConfig load(const Common& c, std::optional<coopevo::Preset> fallback = {}) {
    coopevo::LoadOptions opts;
    if (!c.preset.empty()) opts.preset = coopevo::parse_preset(c.preset);
    else if (c.config.empty()) opts.preset = fallback;
    if (!c.profile.empty()) opts.profile = coopevo::parse_profile(c.profile);
    if (!c.out.empty()) opts.out_dir = c.out;
    if (c.config.empty()) return coopevo::load_config({}, opts);
    return coopevo::load_config_file(c.config, opts);
}

void print_summary(const coopevo::RunResult& r) {
    std::cout << "manifest: " << r.manifest_path.string() << '\n';
    for (const auto& m : r.members) {
        const auto& s = m.summary;
        std::cout << "  " << s.label << ": landscape argmax " << s.landscape_argmax;
        if (m.summary.final_N != 0.0)
            std::cout << ", N = " << s.final_N << ", argmax " << s.final_argmax_x << ", fraction "
                      << s.final_conc_fraction << (s.boundary_warning ? " (mass at the boundary)" : "");
        std::cout << " [" << s.wall_time_s << " s]\n";
        if (s.mass_excursions) std::cerr << "warning: " << s.label << ": " << s.mass_excursions << " mass excursions\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cooperative two-population selection-mutation lab"};
    app.require_subcommand(1);

    Common run_opts;
    unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    auto* run = app.add_subcommand("run", "run an experiment and write CSVs plus a manifest");
    add_common(run, run_opts);
    run->add_option("-j,--workers", workers, "parallel sweep members");

    Common land_opts;
    auto* land = app.add_subcommand("landscape", "write coefficient and r_H landscape CSVs");
    add_common(land, land_opts);

    Common hyp_opts;
    auto* hyp = app.add_subcommand("check-hypotheses", "print the hypothesis report as JSON");
    add_common(hyp, hyp_opts);

    std::string manifest_a, manifest_b, member_a, member_b;
    auto* cmp = app.add_subcommand("compare", "compare argmax trajectories of two runs");
    cmp->add_option("manifest_a", manifest_a)->required();
    cmp->add_option("manifest_b", manifest_b)->required();
    cmp->add_option("--member-a", member_a, "sweep member label in the first run");
    cmp->add_option("--member-b", member_b, "sweep member label in the second run");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = load(run_opts);
            coopevo::RunOptions o;
            o.workers = workers;
            print_summary(coopevo::run_experiment(cfg, o));
        } else if (*land) {
            auto cfg = load(land_opts, coopevo::Preset::LandscapeX);
            if (cfg.preset != coopevo::Preset::LandscapeX && cfg.preset != coopevo::Preset::LandscapeP)
                cfg.preset = coopevo::Preset::LandscapeX;
            print_summary(coopevo::run_experiment(cfg));
        } else if (*hyp) {
            const auto cfg = load(hyp_opts, coopevo::Preset::Custom);
            const auto field = coopevo::build_dna_coefficients(cfg.dna, cfg.grid(), cfg.quad);
            const auto rep = coopevo::check_hypotheses(field, cfg.sim.d1, cfg.sim.d2, {1.5, &cfg.dna});
            std::cout << coopevo::report_json(rep).dump(2) << '\n';
            if (!rep.ok()) return 3;
        } else if (*cmp) {
            std::cout << coopevo::compare_runs(manifest_a, manifest_b, member_a, member_b).dump(2) << '\n';
        }
    } catch (const coopevo::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
