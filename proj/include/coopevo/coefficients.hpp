#pragma once

// Coefficient quadruples (r1, r2, delta1, delta2) for the two-population
// system. The DNA-damage application derives them from a quasi-static
// damaged-cell age profile: a damaged cell of age s survives with weight
//   exp(-gamma_d s - A(s) - B(trait, s)),
// where A and B are the exact antiderivatives of the repair and adaptation
// rates, so each coefficient is a single s-integral.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coopevo/error.hpp"
#include "coopevo/grid.hpp"

namespace coopevo {

enum class TraitVariable { X, P };

inline const char* to_string(TraitVariable v) { return v == TraitVariable::X ? "x" : "p"; }

/// Rates of the DNA-damage model. `variable` says which of the logistic
/// parameters (mean adaptation time x or steepness p) is the evolving trait;
/// the other one is frozen at x_fixed / p_fixed.
struct DnaParams {
    double alpha_m = 1.0;  // peak repair rate
    double mu_a = 1.0;     // repair-peak time
    double sigma = 1.0;    // repair-kernel variance
    double beta_m = 1.0;   // peak adaptation rate
    double p_fixed = 3.0;
    double x_fixed = 2.0;
    double gamma_d = 0.25;  // damaged-cell death rate
    double gamma_a = 0.2;   // adapted-cell death rate
    double delta = 0.02;    // post-adaptation repair rate
    double damage = 0.3;    // constant damage rate D
    TraitVariable variable = TraitVariable::X;

    bool operator==(const DnaParams&) const = default;

    void validate() const {
        auto nonneg = [](double v, const char* name) {
            if (!(v >= 0.0) || !std::isfinite(v))
                fail(ErrorKind::InvalidArgument, std::string(name) + " must be a finite non-negative rate");
        };
        nonneg(alpha_m, "alpha_m");
        nonneg(mu_a, "mu_a");
        nonneg(beta_m, "beta_m");
        nonneg(p_fixed, "p_fixed");
        nonneg(x_fixed, "x_fixed");
        nonneg(gamma_a, "gamma_a");
        nonneg(delta, "delta");
        nonneg(damage, "damage");
        if (!(sigma > 0.0)) fail(ErrorKind::InvalidArgument, "sigma must be positive");
        if (!(gamma_d > 0.0)) fail(ErrorKind::InvalidArgument, "gamma_d must be positive");
        if (!(damage < 1.0)) fail(ErrorKind::InvalidArgument, "damage rate D must be < 1");
        if (!(gamma_a < 1.0)) fail(ErrorKind::InvalidArgument, "gamma_a must be < 1");
    }
};

/// Logistic parameters (x, p) of the adaptation rate for a given trait value.
struct Logistic {
    double x;
    double p;
};

inline Logistic logistic_for(double trait, const DnaParams& params) {
    return params.variable == TraitVariable::X ? Logistic{trait, params.p_fixed}
                                               : Logistic{params.x_fixed, trait};
}

/// ln(1 + e^y) without overflow.
inline double softplus(double y) { return y > 0.0 ? y + std::log1p(std::exp(-y)) : std::log1p(std::exp(y)); }

inline double alpha_kernel(double s, const DnaParams& params) {
    const double z = s - params.mu_a;
    return params.alpha_m * std::exp(-z * z / (2.0 * params.sigma));
}

inline double beta_kernel(double trait, double s, const DnaParams& params) {
    const auto [x, p] = logistic_for(trait, params);
    return params.beta_m / (1.0 + std::exp(-p * (s - x)));
}

/// Exact integral of alpha_kernel over [0, s].
inline double cumulative_alpha(double s, const DnaParams& params) {
    const double w = std::sqrt(2.0 * params.sigma);
    const double scale = params.alpha_m * std::sqrt(std::numbers::pi * params.sigma / 2.0);
    return scale * (std::erf((s - params.mu_a) / w) + std::erf(params.mu_a / w));
}

/// Total repair exposure A_inf, the s -> inf limit of cumulative_alpha.
inline double cumulative_alpha_limit(const DnaParams& params) {
    const double w = std::sqrt(2.0 * params.sigma);
    return params.alpha_m * std::sqrt(std::numbers::pi * params.sigma / 2.0) * (1.0 + std::erf(params.mu_a / w));
}

/// Exact integral of beta_kernel over [0, s].
inline double cumulative_beta(double trait, double s, const DnaParams& params) {
    const auto [x, p] = logistic_for(trait, params);
    const double reach = p * std::max(s, x);
    if (reach < 1e-4) {
        // sigma(y) = 1/2 + y/4 + O(y^3)
        return params.beta_m * (0.5 * s + 0.25 * p * (0.5 * s * s - x * s));
    }
    return params.beta_m / p * (softplus(p * (s - x)) - softplus(-p * x));
}

/// Periodic environment that throttles repair: cos(pi t / 5)^8.
inline double cos8_environment(double t) {
    const double c = std::cos(std::numbers::pi * t / 5.0);
    const double c2 = c * c;
    const double c4 = c2 * c2;
    return c4 * c4;
}

/// Sampled coefficients on a grid. r1 holds the value for a full-strength
/// environment; when `env` is set, r1 at time t is
/// r1 - r1_modulated + env(t) * r1_modulated.
struct CoefficientField {
    Grid grid;
    std::vector<double> r1, r2, delta1, delta2;
    std::vector<double> r1_modulated;  // zero unless the field comes from a repair integral
    std::function<double(double)> env;

    bool modulated() const { return static_cast<bool>(env); }

    /// Fills out with r1 at time t.
    void r1_at(double t, std::span<double> out) const {
        if (!env) {
            std::copy(r1.begin(), r1.end(), out.begin());
            return;
        }
        const double a = env(t);
        for (std::size_t k = 0; k < r1.size(); ++k) out[k] = r1[k] - r1_modulated[k] + a * r1_modulated[k];
    }

    void validate() const {
        const std::size_t n = grid.nx;
        for (const auto* seq : {&r1, &r2, &delta1, &delta2})
            if (seq->size() != n) fail(ErrorKind::InvalidArgument, "coefficient length does not match grid");
        if (!r1_modulated.empty() && r1_modulated.size() != n)
            fail(ErrorKind::InvalidArgument, "modulated part length does not match grid");
        for (std::size_t k = 0; k < n; ++k) {
            if (!std::isfinite(r1[k]) || !std::isfinite(r2[k]) || !std::isfinite(delta1[k]) ||
                !std::isfinite(delta2[k]))
                fail(ErrorKind::InvalidArgument, "non-finite coefficient at node " + std::to_string(k));
            if (delta1[k] < 0.0 || delta2[k] < 0.0)
                fail(ErrorKind::InvalidArgument, "conversion rates must be non-negative (node " + std::to_string(k) + ")");
        }
    }
};

inline CoefficientField constant_field(const Grid& grid, double r1, double r2, double delta1, double delta2) {
    CoefficientField f;
    f.grid = grid;
    f.r1.assign(grid.nx, r1);
    f.r2.assign(grid.nx, r2);
    f.delta1.assign(grid.nx, delta1);
    f.delta2.assign(grid.nx, delta2);
    f.r1_modulated.assign(grid.nx, 0.0);
    return f;
}

/// Repair and adaptation integrals at one trait value:
///   I_alpha = int alpha(s) W(s) ds,  I_beta = int beta(s) W(s) ds,
///   W(s) = exp(-gamma_d s - A(s) - B(trait, s)).
struct DamageIntegrals {
    double repair;
    double adaptation;
};

namespace detail {

struct RepairTables {
    std::vector<double> s, alpha, base_weight;  // base_weight = exp(-gamma_d s - A(s))
};

inline RepairTables repair_tables(const DnaParams& params, const QuadratureSpec& quad) {
    RepairTables t;
    t.s = quadrature_nodes(quad);
    t.alpha.resize(t.s.size());
    t.base_weight.resize(t.s.size());
    for (std::size_t k = 0; k < t.s.size(); ++k) {
        t.alpha[k] = alpha_kernel(t.s[k], params);
        t.base_weight[k] = std::exp(-params.gamma_d * t.s[k] - cumulative_alpha(t.s[k], params));
    }
    return t;
}

inline DamageIntegrals damage_integrals(double trait, const DnaParams& params, const QuadratureSpec& quad,
                                        const RepairTables& tables, std::vector<double>& wa,
                                        std::vector<double>& wb) {
    const std::size_t m = tables.s.size();
    wa.resize(m);
    wb.resize(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double s = tables.s[k];
        const double w = tables.base_weight[k] * std::exp(-cumulative_beta(trait, s, params));
        wa[k] = tables.alpha[k] * w;
        wb[k] = beta_kernel(trait, s, params) * w;
    }
    return {integrate_samples(wa, quad), integrate_samples(wb, quad)};
}

}  // namespace detail

inline DamageIntegrals damage_integrals(double trait, const DnaParams& params, const QuadratureSpec& quad) {
    const auto tables = detail::repair_tables(params, quad);
    std::vector<double> wa, wb;
    return detail::damage_integrals(trait, params, quad, tables, wa, wb);
}

/// Coefficients of the reduced DNA-damage model on `grid`:
///   r1 = 1 - D + D I_alpha,  r2 = 1 - gamma_a - delta,  delta1 = delta,  delta2 = D I_beta.
/// With `env`, only the repair contribution D I_alpha is modulated in time.
inline CoefficientField build_dna_coefficients(const DnaParams& params, const Grid& grid, const QuadratureSpec& quad,
                                               std::function<double(double)> env = {}) {
    params.validate();
    quad.validate();
    const auto tables = detail::repair_tables(params, quad);
    std::vector<double> wa, wb;

    CoefficientField f;
    f.grid = grid;
    f.r1.resize(grid.nx);
    f.r1_modulated.resize(grid.nx);
    f.r2.assign(grid.nx, 1.0 - params.gamma_a - params.delta);
    f.delta1.assign(grid.nx, params.delta);
    f.delta2.resize(grid.nx);
    for (std::size_t k = 0; k < grid.nx; ++k) {
        const auto in = detail::damage_integrals(grid[k], params, quad, tables, wa, wb);
        f.r1_modulated[k] = params.damage * in.repair;
        f.r1[k] = 1.0 - params.damage + f.r1_modulated[k];
        f.delta2[k] = params.damage * in.adaptation;
    }
    f.env = std::move(env);
    return f;
}

// ---------------------------------------------------------------------------
// Hypothesis checks

struct Violation {
    std::string hypothesis;
    std::size_t node;  // npos for global conditions
    std::string detail;
};

/// Closed-form H3 constants of the DNA application. The printed floor uses a
/// symbol that is read either as gamma_a or as delta; both are reported.
struct AnalyticMassBounds {
    double c_N_gamma_a;
    double c_N_delta;
    double C_N;
};

inline AnalyticMassBounds analytic_mass_bounds(const DnaParams& p) {
    return {std::min(1.0 - p.gamma_a, 1.0 - p.damage), std::min(1.0 - p.delta, 1.0 - p.damage), 2.0 + p.damage};
}

struct HypothesisReport {
    bool h1_ok = false;
    bool h2_ok = false;
    bool h3_ok = false;
    double c_N = 0.0;  // realized min over nodes of min(r1 + delta2, r2 + delta1)
    double C_N = 0.0;  // realized max of the same
    double r_sup = 0.0;
    double delta_sup = 0.0;
    std::optional<AnalyticMassBounds> analytic;
    std::vector<Violation> violations;

    bool ok() const { return h1_ok && h2_ok && h3_ok; }
};

struct HypothesisOptions {
    /// Rate C in the growth test delta_i(x) e^{C x} increasing on the last
    /// tenth of the grid.
    double growth_rate = 1.5;
    const DnaParams* dna = nullptr;
};

/// Growth rate used for DNA fields: 2 gamma_d + 1, which dominates the decay
/// of the lower bound on delta2.
inline double dna_growth_rate(const DnaParams& p) { return 2.0 * p.gamma_d + 1.0; }

inline HypothesisReport check_hypotheses(const CoefficientField& field, double d1, double d2,
                                         const HypothesisOptions& opts = {}) {
    constexpr auto npos = static_cast<std::size_t>(-1);
    HypothesisReport rep;
    const std::size_t n = field.grid.nx;

    rep.h1_ok = d1 >= 0.0 && d2 >= 0.0 && !(d1 == 0.0 && d2 == 0.0);
    if (!rep.h1_ok)
        rep.violations.push_back({"H1", npos, "need d1, d2 >= 0 and not both zero"});

    bool sizes_ok = true;
    for (const auto* seq : {&field.r1, &field.r2, &field.delta1, &field.delta2})
        sizes_ok = sizes_ok && seq->size() == n;
    if (!sizes_ok) {
        rep.violations.push_back({"H2", npos, "coefficient lengths do not match the grid"});
        return rep;
    }

    rep.h2_ok = true;
    for (std::size_t k = 0; k < n; ++k) {
        for (double v : {field.r1[k], field.r2[k], field.delta1[k], field.delta2[k]})
            if (!std::isfinite(v)) {
                rep.h2_ok = false;
                rep.violations.push_back({"H2", k, "non-finite coefficient"});
            }
        if (!(field.delta1[k] > 0.0)) {
            rep.h2_ok = false;
            rep.violations.push_back({"H2", k, "delta1 not positive"});
        }
        if (!(field.delta2[k] > 0.0)) {
            rep.h2_ok = false;
            rep.violations.push_back({"H2", k, "delta2 not positive"});
        }
        rep.r_sup = std::max({rep.r_sup, std::abs(field.r1[k]), std::abs(field.r2[k])});
        rep.delta_sup = std::max({rep.delta_sup, field.delta1[k], field.delta2[k]});
    }
    const double growth = opts.dna ? dna_growth_rate(*opts.dna) : opts.growth_rate;
    const std::size_t tail_start = n - std::max<std::size_t>(2, n / 10);
    for (const auto* delta : {&field.delta1, &field.delta2}) {
        for (std::size_t k = tail_start + 1; k < n; ++k) {
            // log form avoids overflow of e^{Cx}
            const double prev = std::log((*delta)[k - 1]) + growth * field.grid[k - 1];
            const double cur = std::log((*delta)[k]) + growth * field.grid[k];
            if (!(cur >= prev)) {
                rep.h2_ok = false;
                rep.violations.push_back({"H2", k, "delta e^{Cx} not increasing on the grid tail"});
                break;
            }
        }
    }

    // r1 is affine in the environment factor, so its extremes are at 0 and 1.
    std::vector<double> r1_lo(field.r1);
    if (field.modulated())
        for (std::size_t k = 0; k < n; ++k) r1_lo[k] = field.r1[k] - field.r1_modulated[k];
    rep.c_N = std::numeric_limits<double>::infinity();
    rep.C_N = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        const double a = field.r2[k] + field.delta1[k];
        const double lo = std::min(r1_lo[k], field.r1[k]) + field.delta2[k];
        const double hi = std::max(r1_lo[k], field.r1[k]) + field.delta2[k];
        rep.c_N = std::min({rep.c_N, a, lo});
        rep.C_N = std::max({rep.C_N, a, hi});
        if (!(std::min(a, lo) > 0.0)) rep.violations.push_back({"H3", k, "r_i + delta_j not positive"});
    }
    rep.h3_ok = rep.c_N > 0.0 && std::isfinite(rep.C_N);
    if (opts.dna) rep.analytic = analytic_mass_bounds(*opts.dna);
    return rep;
}

// ---------------------------------------------------------------------------
// Bounds on delta2 for the variable-x application

/// Witnesses for the exponential bounds on delta2:
///   int_x^{2x} beta >= kappa x,   int_0^{x/2} beta <= k1 e^{-k2 x}.
struct Delta2BoundConstants {
    double a_inf;
    double kappa;
    double k1;
    double k2;
};

/// Log-spaced trait sample used to compute and verify the witnesses.
inline std::vector<double> bound_witness_sample() {
    std::vector<double> xs;
    for (int e = -80; e <= 30; ++e) xs.push_back(std::pow(10.0, e / 10.0));
    return xs;
}

inline Delta2BoundConstants delta2_bound_constants(const DnaParams& params) {
    params.validate();
    if (params.variable != TraitVariable::X)
        fail(ErrorKind::InvalidArgument, "delta2 bounds are stated for the variable-x application");
    if (!(params.p_fixed > 0.0) || !(params.beta_m > 0.0))
        fail(ErrorKind::InvalidArgument, "delta2 bounds need p > 0 and beta_m > 0");

    Delta2BoundConstants c{};
    c.a_inf = cumulative_alpha_limit(params);
    c.kappa = std::numeric_limits<double>::infinity();
    for (double x : bound_witness_sample()) {
        const double window = cumulative_beta(x, 2.0 * x, params) - cumulative_beta(x, x, params);
        c.kappa = std::min(c.kappa, window / x);
    }
    c.k2 = params.p_fixed / 2.0;
    c.k1 = 2.0 * std::numbers::ln2 * params.beta_m / params.p_fixed;
    for (double x : bound_witness_sample()) {
        const double head = cumulative_beta(x, x / 2.0, params);
        if (head > c.k1 * std::exp(-c.k2 * x) * (1.0 + 1e-12))
            fail(ErrorKind::NumericalDomain, "upper witness fails at x = " + std::to_string(x));
    }
    return c;
}

struct Delta2Bounds {
    double lower;
    double upper;
};

/// lower = D e^{-A_inf} (1 - e^{-kappa x}) e^{-2 gamma_d x}
/// upper = (1 + k1) e^{-min(gamma_d / 2, k2) x}
inline Delta2Bounds delta2_bounds(double x, const DnaParams& params, const Delta2BoundConstants& c) {
    if (!(x >= 0.0)) fail(ErrorKind::InvalidArgument, "trait must be non-negative");
    const double lower = params.damage * std::exp(-c.a_inf) * (-std::expm1(-c.kappa * x)) *
                         std::exp(-2.0 * params.gamma_d * x);
    const double upper = (1.0 + c.k1) * std::exp(-std::min(params.gamma_d / 2.0, c.k2) * x);
    return {lower, upper};
}

inline Delta2Bounds delta2_bounds(double x, const DnaParams& params) {
    return delta2_bounds(x, params, delta2_bound_constants(params));
}

}  // namespace coopevo
