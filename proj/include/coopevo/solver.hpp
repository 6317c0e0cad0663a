#pragma once

// Time integration of
//   eps d_t n_i - eps^2 d_i d_xx n_i = n_i (r_i - N) + delta_i n_j,   N = int (n1 + n2),
// with Crank-Nicolson diffusion, explicit reaction and Neumann ends.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coopevo/coefficients.hpp"
#include "coopevo/error.hpp"
#include "coopevo/grid.hpp"
#include "coopevo/spectral.hpp"
#include "coopevo/tridiagonal.hpp"

namespace coopevo {

struct MassBounds {
    double lower;
    double upper;
};

struct SimConfig {
    double epsilon = 0.01;
    double d1 = 1.0;
    double d2 = 1.0;
    double dt = 0.0;  // 0 means dt = epsilon
    double t_end = 1.0;
    std::size_t record_every = 0;      // snapshot cadence in steps; 0 keeps initial and final only
    std::vector<double> record_times;  // extra snapshot times, rounded to the nearest step
    double positivity_tol = 1e-12;     // relative to the running max density
    std::optional<MassBounds> mass_bounds;
    double mass_tol = 0.05;
    double burn_in = 1.0;
    bool allow_any_step_ratio = false;
    bool reaction = true;  // false leaves pure diffusion (conservation and order checks)

    double step() const { return dt > 0.0 ? dt : epsilon; }

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_end / step())); }

    void validate() const {
        if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail(ErrorKind::InvalidArgument, "epsilon must be positive");
        if (!(d1 >= 0.0) || !(d2 >= 0.0) || (d1 == 0.0 && d2 == 0.0))
            fail(ErrorKind::InvalidArgument, "diffusivities must be non-negative and not both zero");
        const double h = step();
        if (!(h > 0.0) || !std::isfinite(h)) fail(ErrorKind::InvalidArgument, "dt must be positive");
        if (!(t_end >= h * (1.0 - 1e-12))) fail(ErrorKind::InvalidArgument, "t_end must be at least dt");
        const double ratio = h / epsilon;
        if (!allow_any_step_ratio && (ratio < 0.1 * (1.0 - 1e-12) || ratio > 10.0 * (1.0 + 1e-12)))
            fail(ErrorKind::InvalidArgument,
                 "dt/epsilon = " + std::to_string(ratio) + " outside [0.1, 10]; set allow_any_step_ratio to override");
        if (!(positivity_tol >= 0.0)) fail(ErrorKind::InvalidArgument, "positivity_tol must be non-negative");
        if (mass_bounds && !(mass_bounds->lower <= mass_bounds->upper))
            fail(ErrorKind::InvalidArgument, "mass bounds out of order");
    }
};

struct PopulationState {
    double t = 0.0;
    std::vector<double> n1, n2;
    double N = 0.0;
};

inline double total_mass(const Grid& grid, std::span<const double> n1, std::span<const double> n2) {
    return integrate_on_grid(n1, grid) + integrate_on_grid(n2, grid);
}

inline PopulationState make_state(const Grid& grid, std::vector<double> n1, std::vector<double> n2, double t = 0.0) {
    if (n1.size() != grid.nx || n2.size() != grid.nx)
        fail(ErrorKind::InvalidArgument, "density length does not match grid");
    PopulationState s{t, std::move(n1), std::move(n2), 0.0};
    s.N = total_mass(grid, s.n1, s.n2);
    return s;
}

// ---------------------------------------------------------------------------
// Initial data

/// amplitude * exp(-width (x - center)^2)
struct GaussianInit {
    double center = 3.0;
    double width = 10.0;
    double amplitude = 0.2;
};

/// exp((-a (x - center)^2 - c) / eps)
struct HopfColeGaussianInit {
    double a = 1.0;
    double c = 0.0;
    double center = 0.0;
};

using InitialDatum = std::variant<GaussianInit, HopfColeGaussianInit>;

inline PopulationState default_initial_state(const Grid& grid, double epsilon, const InitialDatum& kind) {
    std::vector<double> n(grid.nx);
    if (const auto* g = std::get_if<GaussianInit>(&kind)) {
        if (!(g->width > 0.0) || !(g->amplitude >= 0.0))
            fail(ErrorKind::InvalidArgument, "gaussian width must be positive and amplitude non-negative");
        for (std::size_t k = 0; k < grid.nx; ++k) {
            const double z = grid[k] - g->center;
            n[k] = g->amplitude * std::exp(-g->width * z * z);
        }
    } else {
        const auto& h = std::get<HopfColeGaussianInit>(kind);
        if (!(epsilon > 0.0) || !(h.a > 0.0))
            fail(ErrorKind::InvalidArgument, "Hopf-Cole datum needs epsilon > 0 and a > 0");
        for (std::size_t k = 0; k < grid.nx; ++k) {
            const double z = grid[k] - h.center;
            n[k] = std::exp((-h.a * z * z - h.c) / epsilon);
        }
    }
    return make_state(grid, n, n);
}

// ---------------------------------------------------------------------------
// Stepping

namespace detail {

inline double max_of(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

inline void check_density(std::span<const double> n, double tol, double t) {
    double peak = 0.0;
    for (std::size_t k = 0; k < n.size(); ++k) {
        if (!std::isfinite(n[k]))
            fail(ErrorKind::NumericalBlowup, "non-finite density at node " + std::to_string(k) +
                                                 " (t = " + std::to_string(t) + ")");
        peak = std::max(peak, n[k]);
    }
    const double floor = -tol * peak;
    for (std::size_t k = 0; k < n.size(); ++k)
        if (n[k] < floor) throw PositivityError(k, n[k], t);
}

}  // namespace detail

/// Advances a state by one step. Holds the factored implicit operators, so
/// construct once per run.
class Stepper {
public:
    Stepper(const CoefficientField& field, const SimConfig& cfg) : field_(&field), cfg_(cfg) {
        cfg_.validate();
        field.validate();
        const std::size_t n = field.grid.nx;
        const double h = cfg_.step();
        const double dx2 = field.grid.dx * field.grid.dx;
        mu1_ = cfg_.epsilon * cfg_.d1 * h / (2.0 * dx2);
        mu2_ = cfg_.epsilon * cfg_.d2 * h / (2.0 * dx2);
        op1_ = neumann_implicit_operator(n, mu1_);
        op2_ = neumann_implicit_operator(n, mu2_);
        r1_.resize(n);
        rhs1_.resize(n);
        rhs2_.resize(n);
    }

    const SimConfig& config() const { return cfg_; }

    /// One step from `s` at time s.t to s.t + dt (or to `t_next` when given,
    /// which avoids accumulating round-off in the clock).
    void advance(PopulationState& s, std::optional<double> t_next = std::nullopt) {
        const std::size_t n = field_->grid.nx;
        if (s.n1.size() != n || s.n2.size() != n) fail(ErrorKind::GridMismatch, "state is not on the field's grid");
        const double h = cfg_.step();
        const double g = h / cfg_.epsilon;
        field_->r1_at(s.t, r1_);

        apply_neumann_second_difference(s.n1, mu1_, rhs1_);
        apply_neumann_second_difference(s.n2, mu2_, rhs2_);
        for (std::size_t k = 0; cfg_.reaction && k < n; ++k) {
            const double a = s.n1[k], b = s.n2[k];
            rhs1_[k] += g * (a * (r1_[k] - s.N) + field_->delta1[k] * b);
            rhs2_[k] += g * (b * (field_->r2[k] - s.N) + field_->delta2[k] * a);
        }
        op1_.solve(rhs1_);
        op2_.solve(rhs2_);
        s.n1.swap(rhs1_);
        s.n2.swap(rhs2_);
        s.t = t_next ? *t_next : s.t + h;
        detail::check_density(s.n1, cfg_.positivity_tol, s.t);
        detail::check_density(s.n2, cfg_.positivity_tol, s.t);
        s.N = total_mass(field_->grid, s.n1, s.n2);
        if (!std::isfinite(s.N)) fail(ErrorKind::NumericalBlowup, "non-finite total mass");
    }

private:
    const CoefficientField* field_;
    SimConfig cfg_;
    double mu1_ = 0.0, mu2_ = 0.0;
    TridiagonalSolver op1_, op2_;
    std::vector<double> r1_, rhs1_, rhs2_;
};

inline PopulationState cn_step(const PopulationState& state, const CoefficientField& field, const SimConfig& cfg) {
    PopulationState next = state;
    Stepper(field, cfg).advance(next);
    return next;
}

// ---------------------------------------------------------------------------
// Runs

struct SeriesRow {
    double t = 0.0;
    double N = 0.0;
    double argmax_x = 0.0;
    double max_n1 = 0.0;
    double ratio_dev = std::numeric_limits<double>::quiet_NaN();
    double conc_x = std::numeric_limits<double>::quiet_NaN();
    double conc_fraction = std::numeric_limits<double>::quiet_NaN();
};

struct MassExcursion {
    double t;
    double N;
};

struct Trajectory {
    std::vector<PopulationState> snapshots;
    std::vector<SeriesRow> series;
    std::vector<MassExcursion> mass_excursions;
    bool boundary_warning = false;
    std::optional<double> stationary_time;
};

/// Fills extra series columns from the current state.
using SeriesProbe = std::function<void(const PopulationState&, SeriesRow&)>;

namespace detail {

inline SeriesRow series_row(const PopulationState& s, const Grid& grid) {
    SeriesRow row;
    row.t = s.t;
    row.N = s.N;
    std::size_t arg = 0;
    for (std::size_t k = 1; k < s.n1.size(); ++k)
        if (s.n1[k] > s.n1[arg]) arg = k;
    row.argmax_x = grid[arg];
    row.max_n1 = s.n1[arg];
    return row;
}

inline bool touches_boundary(const PopulationState& s) {
    for (const auto* n : {&s.n1, &s.n2}) {
        if (n->empty()) continue;
        const double peak = max_of(*n);
        if (peak > 0.0 && n->back() > 1e-8 * peak) return true;
    }
    return false;
}

inline std::vector<std::size_t> record_steps(const SimConfig& cfg, std::size_t total) {
    std::vector<std::size_t> out{0, total};
    if (cfg.record_every > 0)
        for (std::size_t k = cfg.record_every; k < total; k += cfg.record_every) out.push_back(k);
    for (double t : cfg.record_times) {
        const auto k = static_cast<long long>(std::llround(t / cfg.step()));
        if (k < 0 || static_cast<std::size_t>(k) > total)
            fail(ErrorKind::InvalidArgument, "record time " + std::to_string(t) + " outside the run");
        out.push_back(static_cast<std::size_t>(k));
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Steps `init` to cfg.t_end, recording the series every step and snapshots
/// at the configured cadence. Mass excursions are flagged, never fatal.
inline Trajectory simulate(const PopulationState& init, const CoefficientField& field, const SimConfig& cfg,
                           const SeriesProbe& probe = {}) {
    Stepper stepper(field, cfg);
    const std::size_t total = cfg.steps();
    const auto records = detail::record_steps(cfg, total);
    const double h = cfg.step();

    Trajectory traj;
    PopulationState s = init;
    s.N = total_mass(field.grid, s.n1, s.n2);
    const double t0 = s.t;
    std::size_t next_record = 0;

    auto observe = [&](std::size_t step) {
        SeriesRow row = detail::series_row(s, field.grid);
        if (probe) probe(s, row);
        traj.series.push_back(row);
        if (next_record < records.size() && records[next_record] == step) {
            traj.snapshots.push_back(s);
            ++next_record;
        }
        if (cfg.mass_bounds && s.t - t0 >= cfg.burn_in) {
            const auto& b = *cfg.mass_bounds;
            if (s.N < b.lower * (1.0 - cfg.mass_tol) || s.N > b.upper * (1.0 + cfg.mass_tol))
                traj.mass_excursions.push_back({s.t, s.N});
        }
    };

    observe(0);
    for (std::size_t k = 1; k <= total; ++k) {
        stepper.advance(s, t0 + static_cast<double>(k) * h);
        observe(k);
    }
    traj.boundary_warning = detail::touches_boundary(s);
    return traj;
}

struct ScalarOptions {
    double stat_tol = 1e-8;
    bool stop_when_stationary = true;
};

/// Single-species reduction for d1 = d2 = d:
///   eps d_t w - eps^2 d w'' = w (r_inf - N),  N = int w,
/// evolved with the same scheme. Snapshots hold w in n1 and zeros in n2.
inline Trajectory solve_effective_scalar(std::span<const double> w0, const CoefficientField& field,
                                         const SimConfig& cfg, const ScalarOptions& opts = {}) {
    if (cfg.d1 != cfg.d2) fail(ErrorKind::InvalidArgument, "the scalar reduction needs d1 = d2");
    if (field.modulated()) fail(ErrorKind::InvalidArgument, "the scalar reduction needs a time-independent field");
    const std::size_t n = field.grid.nx;
    if (w0.size() != n) fail(ErrorKind::GridMismatch, "initial density is not on the field's grid");

    std::vector<double> r_inf(n);
    for (std::size_t k = 0; k < n; ++k) r_inf[k] = effective_fitness_r_infty(rates_at(field, k));

    SimConfig c = cfg;
    c.validate();
    const double h = c.step();
    const double mu = c.epsilon * c.d1 * h / (2.0 * field.grid.dx * field.grid.dx);
    const auto op = neumann_implicit_operator(n, mu);
    std::vector<double> rhs(n);
    PopulationState s = make_state(field.grid, std::vector<double>(w0.begin(), w0.end()), std::vector<double>(n, 0.0));

    Trajectory traj;
    const std::size_t total = c.steps();
    const auto records = detail::record_steps(c, total);
    std::size_t next_record = 0;
    auto observe = [&](std::size_t step, bool force) {
        traj.series.push_back(detail::series_row(s, field.grid));
        if (force || (next_record < records.size() && records[next_record] == step)) {
            traj.snapshots.push_back(s);
            while (next_record < records.size() && records[next_record] <= step) ++next_record;
        }
    };
    observe(0, false);
    const double g = h / c.epsilon;
    for (std::size_t k = 1; k <= total; ++k) {
        apply_neumann_second_difference(s.n1, mu, rhs);
        if (c.reaction)
            for (std::size_t i = 0; i < n; ++i) rhs[i] += g * s.n1[i] * (r_inf[i] - s.N);
        op.solve(rhs);
        double change = 0.0;
        for (std::size_t i = 0; i < n; ++i) change = std::max(change, std::abs(rhs[i] - s.n1[i]));
        s.n1.swap(rhs);
        s.t = static_cast<double>(k) * h;
        detail::check_density(s.n1, c.positivity_tol, s.t);
        s.N = integrate_on_grid(s.n1, field.grid);
        if (!std::isfinite(s.N)) fail(ErrorKind::NumericalBlowup, "non-finite total mass");
        const bool stationary = change / h < opts.stat_tol;
        if (stationary && !traj.stationary_time) traj.stationary_time = s.t;
        const bool stop = stationary && opts.stop_when_stationary;
        observe(k, stop || k == total);
        if (stop) break;
    }
    traj.boundary_warning = detail::touches_boundary(s);
    return traj;
}

}  // namespace coopevo
