#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "coopevo/coefficients.hpp"
#include "coopevo/error.hpp"
#include "coopevo/grid.hpp"
#include "coopevo/solver.hpp"
#include "coopevo/spectral.hpp"

namespace coopevo {

inline constexpr double hopf_cole_floor = 1e-300;

struct HopfCole {
    std::vector<double> u1, u2;
    std::vector<char> floored1, floored2;  // 1 where the density sat at or below the floor
};

inline void hopf_cole_into(std::span<const double> n, double epsilon, std::vector<double>& u,
                           std::vector<char>& floored) {
    u.resize(n.size());
    floored.resize(n.size());
    for (std::size_t k = 0; k < n.size(); ++k) {
        floored[k] = !(n[k] > hopf_cole_floor);
        u[k] = epsilon * std::log(floored[k] ? hopf_cole_floor : n[k]);
    }
}

/// u_i = eps ln n_i, with densities clamped to hopf_cole_floor.
inline HopfCole hopf_cole(const PopulationState& state, double epsilon) {
    if (!(epsilon > 0.0)) fail(ErrorKind::InvalidArgument, "epsilon must be positive");
    HopfCole h;
    hopf_cole_into(state.n1, epsilon, h.u1, h.floored1);
    hopf_cole_into(state.n2, epsilon, h.u2, h.floored2);
    return h;
}

/// Centered first differences, one-sided at the ends.
inline std::vector<double> gradient(std::span<const double> u, double dx) {
    const std::size_t n = u.size();
    std::vector<double> g(n);
    if (n < 2) return g;
    g[0] = (u[1] - u[0]) / dx;
    g[n - 1] = (u[n - 1] - u[n - 2]) / dx;
    for (std::size_t k = 1; k + 1 < n; ++k) g[k] = (u[k + 1] - u[k - 1]) / (2.0 * dx);
    return g;
}

inline constexpr double ratio_admissible_floor = 1e-12;

/// max |n1/n2 - q1| over nodes where n2 > 1e-12 max(n2). For d1 != d2 the
/// momentum in q1 is the discrete gradient of u2 = eps ln n2.
inline double ratio_deviation(const PopulationState& state, const CoefficientField& field, double d1, double d2,
                              double epsilon) {
    const std::size_t n = field.grid.nx;
    if (state.n1.size() != n || state.n2.size() != n) fail(ErrorKind::GridMismatch, "state is not on the field's grid");
    const double peak = detail::max_of(state.n2);
    const double floor = ratio_admissible_floor * peak;

    std::vector<double> r1(n);
    field.r1_at(state.t, r1);
    std::vector<double> rho;
    if (d1 != d2) {
        std::vector<double> u2;
        std::vector<char> floored;
        hopf_cole_into(state.n2, epsilon, u2, floored);
        rho = gradient(u2, field.grid.dx);
    }
    const Diffusion d{d1, d2};
    double worst = -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (!(state.n2[k] > floor) || !(state.n2[k] > 0.0)) continue;
        Rates c = rates_at(field, k);
        c.r1 = r1[k];
        const double q = ratio_q(1, c, d, rho.empty() ? 0.0 : rho[k]);
        worst = std::max(worst, std::abs(state.n1[k] / state.n2[k] - q));
    }
    if (worst < 0.0) fail(ErrorKind::DegenerateState, "no admissible node for the ratio deviation");
    return worst;
}

struct Concentration {
    std::size_t node;
    double x;
    double fraction;
};

/// Peak of n1 + n2 (smallest index on ties) and the share of the mass
/// within +-window of it.
inline Concentration concentration(const PopulationState& state, const Grid& grid, double window) {
    const std::size_t n = grid.nx;
    if (state.n1.size() != n || state.n2.size() != n) fail(ErrorKind::GridMismatch, "state is not on the grid");
    if (!(window >= 0.0)) fail(ErrorKind::InvalidArgument, "window must be non-negative");
    std::size_t arg = 0;
    double best = state.n1[0] + state.n2[0];
    for (std::size_t k = 1; k < n; ++k) {
        const double v = state.n1[k] + state.n2[k];
        if (v > best) {
            best = v;
            arg = k;
        }
    }
    double total = 0.0, inside = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double m = trapezoid_weight(grid, k) * (state.n1[k] + state.n2[k]);
        total += m;
        if (std::abs(grid[k] - grid[arg]) <= window * (1.0 + 1e-12)) inside += m;
    }
    if (!(total > 0.0)) fail(ErrorKind::DegenerateState, "zero total mass");
    return {arg, grid[arg], std::clamp(inside / total, 0.0, 1.0)};
}

/// Full width at half maximum of a single-peaked profile, with linear
/// interpolation of the crossings. Peaks touching an end use the end node.
inline double fwhm(std::span<const double> v, const Grid& grid) {
    if (v.size() != grid.nx) fail(ErrorKind::GridMismatch, "profile is not on the grid");
    const auto it = std::max_element(v.begin(), v.end());
    const std::size_t arg = static_cast<std::size_t>(it - v.begin());
    const double half = 0.5 * *it;
    if (!(half > 0.0)) fail(ErrorKind::DegenerateState, "profile has no positive peak");
    double left = grid[0], right = grid[grid.nx - 1];
    for (std::size_t k = arg; k-- > 0;)
        if (v[k] < half) {
            left = grid[k] + (half - v[k]) / (v[k + 1] - v[k]) * grid.dx;
            break;
        }
    for (std::size_t k = arg + 1; k < v.size(); ++k)
        if (v[k] < half) {
            right = grid[k] - (half - v[k]) / (v[k - 1] - v[k]) * grid.dx;
            break;
        }
    return right - left;
}

/// Median of |du/dt - H_D(du/dx, N)| between two snapshots of u1, taken
/// over interior nodes where u1 > max u1 - 2 (and above the floor). The
/// gradient and coefficients are evaluated at the midpoint.
inline double hj_residual(const PopulationState& a, const PopulationState& b, const CoefficientField& field,
                          double d1, double d2, double epsilon) {
    const double dt = b.t - a.t;
    if (!(dt > 0.0)) fail(ErrorKind::InvalidArgument, "snapshots must be in increasing time order");
    const auto ha = hopf_cole(a, epsilon);
    const auto hb = hopf_cole(b, epsilon);
    const std::size_t n = field.grid.nx;
    std::vector<double> mid(n);
    for (std::size_t k = 0; k < n; ++k) mid[k] = 0.5 * (ha.u1[k] + hb.u1[k]);
    const auto rho = gradient(mid, field.grid.dx);
    std::vector<double> r1(n);
    field.r1_at(0.5 * (a.t + b.t), r1);
    const double mass = 0.5 * (a.N + b.N);
    const double top = *std::max_element(hb.u1.begin(), hb.u1.end());
    const Diffusion d{d1, d2};

    std::vector<double> res;
    for (std::size_t k = 1; k + 1 < n; ++k) {
        if (hb.u1[k] <= top - 2.0 || ha.floored1[k] || hb.floored1[k]) continue;
        Rates c = rates_at(field, k);
        c.r1 = r1[k];
        res.push_back(std::abs((hb.u1[k] - ha.u1[k]) / dt - effective_hamiltonian(c, d, rho[k], mass)));
    }
    if (res.empty()) fail(ErrorKind::DegenerateState, "no active node for the residual");
    const auto m = res.begin() + static_cast<std::ptrdiff_t>(res.size() / 2);
    std::nth_element(res.begin(), m, res.end());
    return *m;
}

struct DiagnosticsReport {
    double ratio_dev = 0.0;
    std::size_t conc_node = 0;
    double conc_x = 0.0;
    double conc_mass_fraction = 0.0;
    double max_u1 = 0.0;
    double max_u2 = 0.0;
    HopfCole u;
    std::optional<double> hj_residual;
};

inline DiagnosticsReport diagnose(const PopulationState& state, const CoefficientField& field, double d1, double d2,
                                  double epsilon, double window = 0.5, const PopulationState* previous = nullptr) {
    DiagnosticsReport r;
    r.ratio_dev = ratio_deviation(state, field, d1, d2, epsilon);
    const auto c = concentration(state, field.grid, window);
    r.conc_node = c.node;
    r.conc_x = c.x;
    r.conc_mass_fraction = c.fraction;
    r.u = hopf_cole(state, epsilon);
    r.max_u1 = *std::max_element(r.u.u1.begin(), r.u.u1.end());
    r.max_u2 = *std::max_element(r.u.u2.begin(), r.u.u2.end());
    if (previous) r.hj_residual = hj_residual(*previous, state, field, d1, d2, epsilon);
    return r;
}

/// Series probe filling ratio_dev, conc_x and conc_fraction.
inline SeriesProbe diagnostics_probe(const CoefficientField& field, double d1, double d2, double epsilon,
                                     double window = 0.5) {
    return [&field, d1, d2, epsilon, window](const PopulationState& s, SeriesRow& row) {
        row.ratio_dev = ratio_deviation(s, field, d1, d2, epsilon);
        const auto c = concentration(s, field.grid, window);
        row.conc_x = c.x;
        row.conc_fraction = c.fraction;
    };
}

/// Total positive and negative variation of N over rows with t >= t_from.
struct Variation {
    double positive = 0.0;
    double negative = 0.0;
};

inline Variation mass_variation(std::span<const SeriesRow> series, double t_from) {
    Variation v;
    for (std::size_t k = 1; k < series.size(); ++k) {
        if (series[k - 1].t < t_from) continue;
        const double d = series[k].N - series[k - 1].N;
        (d > 0.0 ? v.positive : v.negative) += std::abs(d);
    }
    return v;
}

}  // namespace coopevo
