// Acceptance checks at desk scale. Prints one PASS/FAIL line per criterion
// and exits non-zero if any criterion fails, except those listed with
// --expect-fail (known failures still print FAIL).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "coopevo/experiments.hpp"

using namespace coopevo;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const MemberResult& member(const RunResult& r, const std::string& label) {
    for (const auto& m : r.members)
        if (m.summary.label == label) return m;
    fail(ErrorKind::InvalidArgument, "no member " + label);
}

const std::vector<SeriesRow>& series(const MemberResult& m) { return m.trajectory->series; }

const SeriesRow& row_at(const std::vector<SeriesRow>& s, double t) {
    const SeriesRow* best = &s.front();
    for (const auto& r : s)
        if (std::abs(r.t - t) < std::abs(best->t - t)) best = &r;
    return *best;
}

Outcome spectral_suite(const CoefficientField& dna) {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> r(-5.0, 5.0), delta(0.0, 5.0), diff(0.0, 3.0), rho(-4.0, 4.0);
    double ident = 0.0, eig = 0.0, recip = 0.0;
    for (int k = 0; k < 1000; ++k) {
        double d1 = delta(rng), d2 = delta(rng);
        if (d1 == 0.0) d1 = 5.0;  // (0, 5]
        if (d2 == 0.0) d2 = 5.0;
        const Rates c{r(rng), r(rng), d1, d2};
        const Diffusion d{diff(rng), diff(rng)};
        const double p = rho(rng);
        ident = std::max(ident, check_identities(c, d, p));
        eig = std::max(eig, eigen_residual(c, d, p, 0.0));
        const Diffusion same{d.d1, d.d1};
        recip = std::max(recip, std::abs(ratio_q(1, c, same, p) * ratio_q(2, c, same, p) - 1.0));
    }
    double rinf = 0.0;
    for (std::size_t k = 0; k < dna.grid.nx; ++k) {
        const auto c = rates_at(dna, k);
        rinf = std::max(rinf, std::abs(effective_fitness_r_infty(c) - hamiltonian_fitness(c, {1.0, 1.0}, 0.0)));
    }
    return {ident < 1e-10 && eig < 1e-12 && recip < 1e-12 && rinf < 1e-12,
            fmt("identities %.2e, eigen %.2e, q1q2-1 %.2e, |r_inf-r_H| %.2e", ident, eig, recip, rinf)};
}

Outcome quadrature_oracles(const Grid& grid) {
    DnaParams p;
    p.alpha_m = 0.0;
    p.p_fixed = 200.0;
    const auto f = build_dna_coefficients(p, grid, default_quadrature(p.gamma_d));
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.nx; ++k) {
        if (grid[k] < 0.5) continue;
        const double exact = p.damage * p.beta_m * std::exp(-p.gamma_d * grid[k]) / (p.gamma_d + p.beta_m);
        worst = std::max(worst, std::abs(f.delta2[k] - exact));
    }
    // leading O(1/p^2) bias of the sigmoid surrogate at x = 0.5
    const double bias = p.damage * p.gamma_d * p.beta_m * std::exp(-p.gamma_d * 0.5) * std::numbers::pi *
                        std::numbers::pi / (6.0 * p.p_fixed * p.p_fixed);

    const DnaParams q;
    const double h = 1e-5;
    double deriv = 0.0;
    for (double s = 0.05; s < 8.0; s += 0.25) {
        deriv = std::max(deriv, std::abs((cumulative_alpha(s + h, q) - cumulative_alpha(s - h, q)) / (2 * h) -
                                         alpha_kernel(s, q)));
        for (double x : {0.5, 2.0, 3.66, 7.0})
            deriv = std::max(deriv, std::abs((cumulative_beta(x, s + h, q) - cumulative_beta(x, s - h, q)) / (2 * h) -
                                             beta_kernel(x, s, q)));
    }
    return {worst < 1e-6 && deriv < 1e-6,
            fmt("delta2 vs step closed form %.2e (surrogate bias at x=0.5 ~ %.2e), derivative mismatch %.2e", worst,
                bias, deriv)};
}

Outcome appendix_bounds(const CoefficientField& dna, const DnaParams& params, const QuadratureSpec& quad) {
    const auto c = delta2_bound_constants(params);
    std::size_t bad = 0;
    double max_delta2 = 0.0;
    for (std::size_t k = 0; k < dna.grid.nx; ++k) {
        const auto b = delta2_bounds(dna.grid[k], params, c);
        if (!(b.lower <= dna.delta2[k] && dna.delta2[k] <= b.upper)) ++bad;
        max_delta2 = std::max(max_delta2, dna.delta2[k]);
    }
    DnaParams strong = params;
    strong.damage = 0.999;
    const auto f = build_dna_coefficients(strong, dna.grid, quad);
    const double strong_max = *std::max_element(f.delta2.begin(), f.delta2.end());
    return {bad == 0 && max_delta2 < 1.0 && strong_max < 1.0,
            fmt("%zu of %zu nodes outside [lower, upper]; max delta2 %.4f (D=%.2f), %.4f (D=0.999)", bad, dna.grid.nx,
                max_delta2, params.damage, strong_max)};
}

Outcome solver_order() {
    const auto g = make_grid(10.0, 401);
    const auto zero = constant_field(g, 0, 0, 0, 0);
    SimConfig cfg;
    cfg.reaction = false;
    cfg.allow_any_step_ratio = true;
    double drift = 0.0;
    for (auto [d1, d2] : {std::pair{1.0, 1.0}, {0.0, 2.0}, {2.5, 0.3}}) {
        cfg.epsilon = 1.0;
        cfg.dt = 0.1;
        cfg.t_end = 10.0;
        cfg.d1 = d1;
        cfg.d2 = d2;
        const auto traj = simulate(default_initial_state(g, 1.0, GaussianInit{2.0, 3.0, 1.0}), zero, cfg);
        const double m0 = traj.series.front().N;
        drift = std::max(drift, std::abs(traj.series.back().N - m0) / m0 / cfg.t_end);
    }

    auto mode_error = [&](std::size_t nx, double dt) {
        const auto grid = make_grid(1.0, nx);
        const auto f = constant_field(grid, 0, 0, 0, 0);
        std::vector<double> n(nx);
        for (std::size_t k = 0; k < nx; ++k) n[k] = 1.0 + 0.5 * std::cos(std::numbers::pi * grid[k]);
        SimConfig c = cfg;
        c.epsilon = 0.1;
        c.d1 = c.d2 = 1.0;
        c.dt = dt;
        c.t_end = 0.5;
        const auto last = simulate(make_state(grid, n, n), f, c).snapshots.back();
        const double decay = std::exp(-0.1 * std::numbers::pi * std::numbers::pi * last.t);
        double err = 0.0;
        for (std::size_t k = 0; k < nx; ++k)
            err = std::max(err, std::abs(last.n1[k] - 1.0 - 0.5 * std::cos(std::numbers::pi * grid[k]) * decay));
        return err;
    };
    const double e1 = mode_error(41, 0.02), e2 = mode_error(81, 0.01), e3 = mode_error(161, 0.005);
    const double f1 = e1 / e2, f2 = e2 / e3;
    return {drift < 1e-10 && f1 >= 3.5 && f2 >= 3.5,
            fmt("mass drift %.2e per unit time; heat-mode factors %.3f, %.3f", drift, f1, f2)};
}

Outcome mass_bounds(const MemberResult& m) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& r : series(m))
        if (r.t >= 1.0) {
            lo = std::min(lo, r.N);
            hi = std::max(hi, r.N);
        }
    const auto& h = m.hypotheses;
    return {lo >= 0.95 * h.c_N && hi <= 1.05 * h.C_N,
            fmt("N in [%.5f, %.5f] for t >= 1; allowed [%.5f, %.5f]", lo, hi, 0.95 * h.c_N, 1.05 * h.C_N)};
}

Outcome fig3(const MemberResult& m) {
    const auto& s = series(m);
    const double initial = s.front().ratio_dev;
    const double final = row_at(s, 0.699).ratio_dev;
    bool decreasing = true;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 10; ++k) {
        const double v = row_at(s, 0.1 + k * (0.699 - 0.1) / 9.0).ratio_dev;
        decreasing = decreasing && v < prev;
        prev = v;
    }
    return {final < 0.1 * initial && decreasing,
            fmt("deviation %.4g -> %.4g (%.2f%%), %s on [0.1, 0.699]", initial, final, 100.0 * final / initial,
                decreasing ? "decreasing" : "not decreasing")};
}

Outcome fig4(const RunResult& r, double dx) {
    const auto& m = member(r, "eps_0.001").summary;
    const auto nodes = std::llround(std::abs(m.final_argmax_x - m.landscape_argmax) / dx);
    const double w1 = member(r, "eps_0.05").summary.final_fwhm;
    const double w2 = member(r, "eps_0.01").summary.final_fwhm;
    const double w3 = m.final_fwhm;
    return {nodes <= 3 && m.final_conc_fraction > 0.9 && w1 > w2 && w2 > w3,
            fmt("argmax %.3f vs x* %.3f (%lld nodes), fraction %.3f; FWHM %.3f > %.3f > %.3f", m.final_argmax_x,
                m.landscape_argmax, nodes, m.final_conc_fraction, w1, w2, w3)};
}

Outcome fig5(const RunResult& r, double dx) {
    const auto& a = member(r, "d_1_1");
    const auto& b = member(r, "d_0_2");
    const auto gap = std::llround(std::abs(a.summary.final_conc_x - b.summary.final_conc_x) / dx);

    // waypoints: every node the (1,1) peak crosses on its way to the end point
    const auto& sa = series(a);
    const auto& sb = series(b);
    const double start = sa.front().argmax_x, end = sa.back().argmax_x;
    const double dir = end >= start ? 1.0 : -1.0;
    auto first_reach = [&](const std::vector<SeriesRow>& s, double w) {
        for (const auto& row : s)
            if (dir * (row.argmax_x - w) >= -1e-9) return row.t;
        return std::numeric_limits<double>::infinity();
    };
    int waypoints = 0, earlier = 0;
    for (double w = start + dir * dx; dir * (end - w) >= -1e-9; w += dir * dx) {
        ++waypoints;
        if (first_reach(sb, w) < first_reach(sa, w)) ++earlier;
    }
    return {gap <= 3 && earlier == 0,
            fmt("final points %.3f / %.3f (%lld nodes); (0,2) ahead at %d of %d waypoints", a.summary.final_conc_x,
                b.summary.final_conc_x, gap, earlier, waypoints)};
}

bool rises_over_late_half(const MemberResult& m) {
    const auto& s = series(m);
    const double t_half = 0.5 * s.back().t;
    double prev = -std::numeric_limits<double>::infinity(), first = 0.0;
    bool started = false;
    for (const auto& r : s) {
        if (r.t < t_half) continue;
        if (!started) first = r.argmax_x;
        started = true;
        if (r.argmax_x < prev) return false;
        prev = r.argmax_x;
    }
    return started && s.back().argmax_x > first;
}

Outcome drift(const RunResult& f6, const RunResult& f7) {
    bool ok = true;
    std::string detail;
    for (const auto* run : {&f6, &f7})
        for (const auto& m : run->members) {
            const auto& s = m.summary;
            const bool cos8 = s.environment == Environment::Cos8;
            const bool good = cos8 ? s.final_argmax_x < s.half_argmax_x : rises_over_late_half(m);
            ok = ok && good;
            detail += fmt("%s%s eps=%g %s %.3f->%.3f", detail.empty() ? "" : "; ", s.run_id.c_str(), s.epsilon,
                          cos8 ? "cos8" : "stable", s.half_argmax_x, s.final_argmax_x);
        }
    return {ok, detail};
}

Outcome scalar(const MemberResult& two, const CoefficientField& field, const ExperimentConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.epsilon = 0.01;
    sim.dt = 0.0;
    sim.d1 = sim.d2 = 1.0;
    sim.mass_bounds.reset();
    const auto init = default_initial_state(field.grid, sim.epsilon, cfg.init.datum());
    std::vector<double> w0(init.n1);
    for (std::size_t k = 0; k < w0.size(); ++k) w0[k] += init.n2[k];
    const auto traj = solve_effective_scalar(w0, field, sim);
    const double ns = traj.series.back().N, nt = two.summary.final_N;
    const double rel = std::abs(ns - nt) / nt;
    return {rel < 0.02, fmt("scalar N %.7f vs two-species N %.7f (%.3f%%)%s", ns, nt, 100.0 * rel,
                            traj.stationary_time ? ", stationary" : "")};
}

Outcome monotone(const MemberResult& m) {
    const auto& s = m.summary;
    const double ratio = s.positive_variation > 0.0 ? s.negative_variation / s.positive_variation : 0.0;
    return {ratio < 0.05, fmt("negative/positive variation of N %.3g / %.3g = %.2f%%", s.negative_variation,
                              s.positive_variation, 100.0 * ratio)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale acceptance checks"};
    std::string out = "acceptance_out";
    unsigned workers = std::max(4u, std::thread::hardware_concurrency());
    app.add_option("-o,--out", out, "directory for run outputs");
    app.add_option("-j,--workers", workers, "parallel sweep members");
    std::vector<int> expect_fail;
    app.add_option("--expect-fail", expect_fail, "criteria known to fail; they do not affect the exit code");
    CLI11_PARSE(app, argc, argv);

    int failures = 0, unexpected = 0;
    const std::set<int> known(expect_fail.begin(), expect_fail.end());
    auto report = [&](int id, double budget, const std::function<Outcome()>& check) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o{false, ""};
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= budget;
        const bool pass = o.pass && in_time;
        failures += !pass;
        unexpected += !pass && !known.contains(id);
        std::printf("criterion %2d: %s  %s [%.2f s%s]\n", id, pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                    in_time ? "" : ", over budget");
        std::fflush(stdout);
    };

    const DnaParams params;
    const auto grid = make_grid(10.0, 1001);
    const auto quad = default_quadrature(params.gamma_d);
    std::optional<CoefficientField> dna;

    report(1, 1.0, [&] {
        dna = build_dna_coefficients(params, grid, quad);
        return spectral_suite(*dna);
    });
    report(2, 1.0, [&] { return quadrature_oracles(grid); });
    report(3, 1.0, [&] {
        if (!dna) dna = build_dna_coefficients(params, grid, quad);
        return appendix_bounds(*dna, params, quad);
    });
    report(4, 10.0, solver_order);

    RunOptions opts;
    opts.workers = workers;
    opts.keep_trajectories = true;
    auto run = [&](Preset p) {
        LoadOptions lo;
        lo.preset = p;
        lo.profile = Profile::Desk;
        lo.out_dir = out + "/" + to_string(p);
        auto cfg = load_config({{"experiment.run_id", to_string(p)}}, lo);
        return std::make_pair(cfg, run_experiment(cfg, opts));
    };

    // The sweeps are shared between criteria; their wall time is charged to
    // the first criterion that needs them.
    std::optional<std::pair<ExperimentConfig, RunResult>> f3, f4, f5, f6, f7;
    auto fig4_run = [&] {
        if (!f4) f4 = run(Preset::Fig4EpsSweep);
        return &f4->second;
    };
    const double dx = grid.dx;

    report(5, 600.0, [&] { return mass_bounds(member(*fig4_run(), "eps_0.01")); });
    report(6, 120.0, [&] {
        f3 = run(Preset::Fig3Ratio);
        return fig3(f3->second.members.front());
    });
    report(7, 600.0, [&] { return fig4(*fig4_run(), dx); });
    report(8, 600.0, [&] {
        f5 = run(Preset::Fig5DSweep);
        return fig5(f5->second, dx);
    });
    report(9, 900.0, [&] {
        f6 = run(Preset::Fig6PStable);
        f7 = run(Preset::Fig7PVarying);
        return drift(f6->second, f7->second);
    });
    report(10, 120.0, [&] {
        const auto& m = member(*fig4_run(), "eps_0.01");
        return scalar(m, *m.field, f4->first);
    });
    report(11, 600.0, [&] { return monotone(member(*fig4_run(), "eps_0.001")); });

    std::printf("%d of 11 criteria failed (%d unexpected)\n", failures, unexpected);
    return unexpected == 0 ? 0 : 1;
}
