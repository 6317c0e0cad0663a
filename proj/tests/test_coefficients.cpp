#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "coopevo/coefficients.hpp"

using namespace coopevo;

namespace {

DnaParams example_params() {
    DnaParams p;
    p.mu_a = 1.0;
    p.sigma = 0.5;
    p.alpha_m = 1.0;
    p.beta_m = 1.0;
    p.p_fixed = 3.0;
    return p;
}

// Max |delta2 - closed form| over nodes x >= 0.5 for alpha = 0 and a steep step.
double step_surrogate_error(const DnaParams& p, const Grid& g) {
    const auto f = build_dna_coefficients(p, g, default_quadrature(p.gamma_d, 0.001));
    double worst = 0.0;
    for (std::size_t k = 0; k < g.nx; ++k) {
        if (g[k] < 0.5) continue;
        const double exact = p.damage * p.beta_m * std::exp(-p.gamma_d * g[k]) / (p.gamma_d + p.beta_m);
        worst = std::max(worst, std::abs(f.delta2[k] - exact));
    }
    return worst;
}

}  // namespace

TEST(Kernels, AlphaValues) {
    const auto p = example_params();
    EXPECT_DOUBLE_EQ(alpha_kernel(p.mu_a, p), p.alpha_m);
    EXPECT_NEAR(alpha_kernel(2.0, p), 0.36787944117144233, 1e-12);
    auto zero = p;
    zero.alpha_m = 0.0;
    EXPECT_EQ(alpha_kernel(0.7, zero), 0.0);
    EXPECT_EQ(cumulative_alpha(5.0, zero), 0.0);
}

TEST(Kernels, BetaValues) {
    auto p = example_params();
    p.x_fixed = 2.0;
    EXPECT_DOUBLE_EQ(beta_kernel(2.0, 2.0, p), 0.5);
    EXPECT_NEAR(beta_kernel(2.0, 3.0, p), 0.9525741268224334, 1e-12);
    EXPECT_NEAR(beta_kernel(2.0, 60.0, p), p.beta_m, 1e-15);

    p.variable = TraitVariable::P;
    EXPECT_NEAR(beta_kernel(3.0, 3.0, p), 0.9525741268224334, 1e-12);
}

TEST(Kernels, CumulativeBetaOracle) {
    auto p = example_params();
    p.beta_m = 2.0;
    EXPECT_EQ(cumulative_beta(2.0, 0.0, p), 0.0);
    EXPECT_NEAR(cumulative_beta(2.0, 2.0, p), 0.4604477, 1e-7);
    const double exact = (2.0 / 3.0) * (std::log(2.0) - std::log1p(std::exp(-6.0)));
    EXPECT_NEAR(cumulative_beta(2.0, 2.0, p), exact, 1e-14);

    QuadratureSpec q{QuadratureRule::Simpson, 2.0, 2000, 1e-14};
    EXPECT_NEAR(integrate_semi_infinite([&](double s) { return beta_kernel(2.0, s, p); }, q), exact, 1e-12);
}

TEST(Kernels, CumulativeBetaStepLimit) {
    auto p = example_params();
    p.p_fixed = 1e4;
    EXPECT_NEAR(cumulative_beta(2.0, 5.0, p), 3.0, 1e-6);
    EXPECT_NEAR(cumulative_beta(2.0, 1.0, p), 0.0, 1e-6);
}

TEST(Kernels, CumulativeBetaShallowBranch) {
    auto p = example_params();
    p.p_fixed = 1e-9;
    QuadratureSpec q{QuadratureRule::Simpson, 3.0, 300, 1e-14};
    EXPECT_NEAR(cumulative_beta(2.0, 3.0, p), integrate_semi_infinite([&](double s) { return beta_kernel(2.0, s, p); }, q),
                1e-12);
}

TEST(Kernels, CumulativeAlphaLimit) {
    const auto p = example_params();
    QuadratureSpec q{QuadratureRule::Simpson, 40.0, 8000, 1e-14};
    const double numeric = integrate_semi_infinite([&](double s) { return alpha_kernel(s, p); }, q);
    EXPECT_NEAR(cumulative_alpha_limit(p), numeric, 1e-10);
    EXPECT_NEAR(cumulative_alpha(40.0, p), cumulative_alpha_limit(p), 1e-12);
    EXPECT_EQ(cumulative_alpha(0.0, p), 0.0);
}

TEST(Kernels, DerivativesMatchFiniteDifferences) {
    auto p = example_params();
    const double h = 1e-5;
    for (double s : {0.1, 0.5, 1.0, 1.7, 3.0, 6.0}) {
        const double da = (cumulative_alpha(s + h, p) - cumulative_alpha(s - h, p)) / (2 * h);
        EXPECT_NEAR(da, alpha_kernel(s, p), 1e-6) << "s = " << s;
        for (double x : {0.5, 2.0, 5.0}) {
            const double db = (cumulative_beta(x, s + h, p) - cumulative_beta(x, s - h, p)) / (2 * h);
            EXPECT_NEAR(db, beta_kernel(x, s, p), 1e-6) << "s = " << s << ", x = " << x;
        }
    }
}

TEST(Kernels, Cos8Environment) {
    EXPECT_DOUBLE_EQ(cos8_environment(0.0), 1.0);
    EXPECT_NEAR(cos8_environment(2.5), 0.0, 1e-30);
    EXPECT_NEAR(cos8_environment(5.0), 1.0, 1e-15);
    EXPECT_NEAR(cos8_environment(1.25), std::pow(0.5, 4), 1e-15);
}

TEST(DnaField, StepSurrogateApproachesClosedForm) {
    // alpha = 0 and a steep adaptation step: delta2 -> D beta_m e^{-gamma_d x} / (gamma_d + beta_m).
    // The p = 200 sigmoid carries an O(1/p^2) bias of about
    // D gamma_d beta_m e^{-gamma_d x} pi^2 / (6 p^2); it shrinks 4x when p doubles.
    DnaParams p;
    p.alpha_m = 0.0;
    p.p_fixed = 200.0;
    const auto g = make_grid(10.0, 41);
    const double e200 = step_surrogate_error(p, g);
    const double bias = p.damage * p.gamma_d * p.beta_m * std::exp(-p.gamma_d * 0.5) * std::numbers::pi *
                        std::numbers::pi / (6.0 * p.p_fixed * p.p_fixed);
    EXPECT_LT(e200, 1.05 * bias);
    EXPECT_GT(e200, 0.5 * bias);

    p.p_fixed = 400.0;
    const double e400 = step_surrogate_error(p, g);
    EXPECT_NEAR(e200 / e400, 4.0, 0.2);

    // small damage scales the bias below 1e-6
    p.p_fixed = 200.0;
    p.damage = 0.05;
    EXPECT_LT(step_surrogate_error(p, g), 1e-6);
}

TEST(DnaField, StructureOfDefaults) {
    const DnaParams p;
    const auto g = make_grid(10.0, 101);
    const auto f = build_dna_coefficients(p, g, default_quadrature(p.gamma_d));
    ASSERT_NO_THROW(f.validate());
    for (std::size_t k = 0; k < g.nx; ++k) {
        EXPECT_DOUBLE_EQ(f.r2[k], 1.0 - p.gamma_a - p.delta);
        EXPECT_DOUBLE_EQ(f.delta1[k], p.delta);
        EXPECT_GT(f.delta2[k], 0.0);
        EXPECT_LT(f.delta2[k], 1.0);
        EXPECT_GE(f.r1[k], 1.0 - p.damage);
        EXPECT_LE(f.r1[k], 1.0);
    }
    // adaptation gets rarer as the mean adaptation time grows
    for (std::size_t k = 1; k < g.nx; ++k) EXPECT_LT(f.delta2[k], f.delta2[k - 1]);
}

TEST(DnaField, EnvironmentModulatesRepairOnly) {
    const DnaParams p;
    const auto g = make_grid(10.0, 21);
    const auto f = build_dna_coefficients(p, g, default_quadrature(p.gamma_d), cos8_environment);
    std::vector<double> at0(g.nx), trough(g.nx);
    f.r1_at(0.0, at0);
    f.r1_at(2.5, trough);
    for (std::size_t k = 0; k < g.nx; ++k) {
        EXPECT_DOUBLE_EQ(at0[k], f.r1[k]);
        EXPECT_NEAR(trough[k], 1.0 - p.damage, 1e-12);
    }
}

TEST(DnaField, RejectsInvalidParameters) {
    DnaParams p;
    p.damage = 1.0;
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.sigma = 0.0;
    EXPECT_THROW(p.validate(), Error);
    p = {};
    p.beta_m = -1.0;
    EXPECT_THROW(p.validate(), Error);
}

TEST(Hypotheses, NoDiffusionFailsH1) {
    const auto f = constant_field(make_grid(1.0, 5), 1.0, 1.0, 0.5, 0.5);
    const auto rep = check_hypotheses(f, 0.0, 0.0);
    EXPECT_FALSE(rep.h1_ok);
    EXPECT_FALSE(rep.ok());
    ASSERT_FALSE(rep.violations.empty());
    EXPECT_EQ(rep.violations.front().hypothesis, "H1");
}

TEST(Hypotheses, ConstantFieldBounds) {
    const auto f = constant_field(make_grid(1.0, 5), 1.0, 1.0, 0.5, 0.5);
    const auto rep = check_hypotheses(f, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(rep.c_N, 1.5);
    EXPECT_DOUBLE_EQ(rep.C_N, 1.5);
    EXPECT_TRUE(rep.h3_ok);
}

TEST(Hypotheses, NonPositiveConversionFailsH2) {
    auto f = constant_field(make_grid(1.0, 5), 1.0, 1.0, 0.5, 0.5);
    f.delta2[2] = 0.0;
    const auto rep = check_hypotheses(f, 1.0, 1.0);
    EXPECT_FALSE(rep.h2_ok);
    EXPECT_TRUE(std::any_of(rep.violations.begin(), rep.violations.end(),
                            [](const Violation& v) { return v.hypothesis == "H2" && v.node == 2; }));
}

TEST(Hypotheses, DnaFieldRealizedFloor) {
    DnaParams p;
    p.delta = 0.1;
    p.gamma_a = 0.2;
    p.damage = 0.3;
    const auto f = build_dna_coefficients(p, make_grid(10.0, 201), default_quadrature(p.gamma_d));
    const auto rep = check_hypotheses(f, 1.0, 1.0, {1.5, &p});
    EXPECT_TRUE(rep.ok());
    EXPECT_GE(rep.c_N, 0.7 - 1e-9);
    ASSERT_TRUE(rep.analytic.has_value());
    EXPECT_NEAR(rep.analytic->c_N_gamma_a, 0.7, 1e-15);
    EXPECT_GE(rep.C_N, rep.c_N);
}

TEST(Hypotheses, ModulatedFieldWidensBounds) {
    const DnaParams p;
    const auto g = make_grid(10.0, 51);
    const auto stable = build_dna_coefficients(p, g, default_quadrature(p.gamma_d));
    const auto varying = build_dna_coefficients(p, g, default_quadrature(p.gamma_d), cos8_environment);
    const auto a = check_hypotheses(stable, 1.0, 1.0, {1.5, &p});
    const auto b = check_hypotheses(varying, 1.0, 1.0, {1.5, &p});
    EXPECT_LE(b.c_N, a.c_N);
    EXPECT_DOUBLE_EQ(b.C_N, a.C_N);
}

TEST(Delta2Bounds, LowerVanishesAtZero) {
    const DnaParams p;
    EXPECT_EQ(delta2_bounds(0.0, p).lower, 0.0);
}

TEST(Delta2Bounds, HoldAtEveryNode) {
    const DnaParams p;
    const auto g = make_grid(10.0, 201);
    const auto f = build_dna_coefficients(p, g, default_quadrature(p.gamma_d));
    const auto c = delta2_bound_constants(p);
    EXPECT_GT(c.kappa, 0.0);
    for (std::size_t k = 0; k < g.nx; ++k) {
        const auto b = delta2_bounds(g[k], p, c);
        EXPECT_LE(b.lower, f.delta2[k]) << "x = " << g[k];
        EXPECT_GE(b.upper, f.delta2[k]) << "x = " << g[k];
        EXPECT_LT(f.delta2[k], 1.0);
    }
}

TEST(Delta2Bounds, StrongDamageStaysBelowOne) {
    DnaParams p;
    p.damage = 0.999;
    p.alpha_m = 0.0;
    const auto g = make_grid(10.0, 101);
    const auto f = build_dna_coefficients(p, g, default_quadrature(p.gamma_d));
    for (double v : f.delta2) EXPECT_LT(v, 1.0);
}

TEST(Delta2Bounds, RequireVariableX) {
    DnaParams p;
    p.variable = TraitVariable::P;
    EXPECT_THROW(delta2_bound_constants(p), Error);
}
