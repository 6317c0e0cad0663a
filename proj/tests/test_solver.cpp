#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "coopevo/solver.hpp"

using namespace coopevo;

namespace {

SimConfig diffusion_only(double eps, double dt, double t_end, double d1 = 1.0, double d2 = 1.0) {
    SimConfig c;
    c.epsilon = eps;
    c.dt = dt;
    c.t_end = t_end;
    c.d1 = d1;
    c.d2 = d2;
    c.reaction = false;
    c.allow_any_step_ratio = true;
    return c;
}

// Max error against 1 + cos(pi x / L) e^{-eps d (pi/L)^2 t} on [0, 1].
double heat_mode_error(std::size_t nx, double dt) {
    const auto g = make_grid(1.0, nx);
    const auto field = constant_field(g, 0, 0, 0, 0);
    std::vector<double> n(nx);
    for (std::size_t k = 0; k < nx; ++k) n[k] = 1.0 + 0.5 * std::cos(std::numbers::pi * g[k]);
    const auto cfg = diffusion_only(0.1, dt, 0.5);
    const auto traj = simulate(make_state(g, n, n), field, cfg);
    const auto& last = traj.snapshots.back();
    const double decay = std::exp(-0.1 * std::numbers::pi * std::numbers::pi * last.t);
    double err = 0.0;
    for (std::size_t k = 0; k < nx; ++k)
        err = std::max(err, std::abs(last.n1[k] - (1.0 + 0.5 * std::cos(std::numbers::pi * g[k]) * decay)));
    return err;
}

}  // namespace

TEST(Tridiagonal, SolvesKnownSystem) {
    TridiagonalSolver s({0, 1, 1}, {4, 4, 4}, {1, 1, 0});
    std::vector<double> b{5, 6, 5};  // solution (1, 1, 1)
    s.solve(b);
    for (double v : b) EXPECT_NEAR(v, 1.0, 1e-15);
    std::vector<double> short_rhs(2);
    EXPECT_THROW(s.solve(short_rhs), Error);
}

TEST(Tridiagonal, NeumannOperatorInvertsExplicitForm) {
    // (I - mu L) applied to the solution of (I - mu L) x = b returns b
    const std::size_t n = 9;
    const double mu = 0.7;
    const auto op = neumann_implicit_operator(n, mu);
    std::vector<double> b{1, 3, 2, 5, 4, 0, 1, 2, 7}, x = b, back(n);
    op.solve(x);
    apply_neumann_second_difference(x, -mu, back);
    for (std::size_t k = 0; k < n; ++k) EXPECT_NEAR(back[k], b[k], 1e-13);
}

TEST(Step, ConstantStateWithoutReactionIsUnchanged) {
    const auto g = make_grid(10.0, 101);
    const auto field = constant_field(g, 0, 0, 0, 0);
    const auto s = make_state(g, std::vector<double>(g.nx, 0.3), std::vector<double>(g.nx, 0.7));
    const auto next = cn_step(s, field, diffusion_only(0.5, 0.5, 0.5));
    for (std::size_t k = 0; k < g.nx; ++k) {
        EXPECT_NEAR(next.n1[k], 0.3, 1e-14);
        EXPECT_NEAR(next.n2[k], 0.7, 1e-14);
    }
    EXPECT_DOUBLE_EQ(next.t, 0.5);
}

TEST(Step, ZeroReactionConservesMass) {
    const auto g = make_grid(10.0, 201);
    const auto field = constant_field(g, 0, 0, 0, 0);
    for (auto [d1, d2] : {std::pair{1.0, 1.0}, {0.0, 2.0}, {0.05, 1.95}, {3.0, 0.5}}) {
        auto s = default_initial_state(g, 0.1, GaussianInit{1.0, 2.0, 1.0});
        const double m0 = s.N;
        const auto cfg = diffusion_only(1.0, 0.5, 20.0, d1, d2);
        Stepper stepper(field, cfg);
        for (int k = 0; k < 40; ++k) {
            const double before = s.N;
            stepper.advance(s);
            EXPECT_NEAR(s.N, before, 1e-12 * before);
        }
        // per unit time
        EXPECT_LT(std::abs(s.N - m0) / m0 / 20.0, 1e-10) << "d = (" << d1 << ", " << d2 << ")";
    }
}

TEST(Step, HeatModeIsSecondOrder) {
    const double coarse = heat_mode_error(41, 0.02);
    const double fine = heat_mode_error(81, 0.01);
    EXPECT_GE(coarse / fine, 3.5);
    EXPECT_LT(fine, 1e-3);
}

TEST(Step, ForwardEulerReactionWithoutDiffusion) {
    const auto g = make_grid(1.0, 5);
    auto field = constant_field(g, 0.9, 0.4, 0.3, 0.2);
    field.r1[2] = 1.3;
    const std::vector<double> a{0.1, 0.2, 0.5, 0.2, 0.1}, b{0.2, 0.1, 0.4, 0.3, 0.2};
    const auto s = make_state(g, a, b);
    SimConfig cfg;
    cfg.epsilon = 0.1;
    cfg.dt = 0.05;
    cfg.d1 = 0.0;
    cfg.d2 = 1.0;
    const auto next = cn_step(s, field, cfg);
    const double g_ = 0.05 / 0.1;
    for (std::size_t k = 0; k < g.nx; ++k)
        EXPECT_DOUBLE_EQ(next.n1[k], a[k] + g_ * (a[k] * (field.r1[k] - s.N) + 0.3 * b[k]));
    EXPECT_NEAR(next.N, total_mass(g, next.n1, next.n2), 1e-15);
}

TEST(Step, ModulatedRateUsesStartOfStep) {
    const auto g = make_grid(1.0, 3);
    auto field = constant_field(g, 1.0, 0.0, 0.0, 0.0);
    field.r1_modulated.assign(3, 1.0);
    field.env = [](double t) { return t < 1.0 ? 0.0 : 1.0; };
    auto s = make_state(g, {1, 1, 1}, {0, 0, 0});
    SimConfig cfg;
    cfg.epsilon = 1.0;
    cfg.d1 = 0.0;
    cfg.d2 = 1.0;
    cfg.dt = 1.0;
    // at t = 0 the rate is 0, so n1 = 1 + (0 - N) with N = 1
    const auto next = cn_step(s, field, cfg);
    EXPECT_NEAR(next.n1[1], 0.0, 1e-15);
}

TEST(Step, PositivityBreachCarriesNode) {
    const auto g = make_grid(1.0, 11);
    const auto field = constant_field(g, 0, 0, 0, 0);
    std::vector<double> a(11, 1.0);
    a[4] = -0.5;
    auto s = make_state(g, a, std::vector<double>(11, 1.0));
    auto cfg = diffusion_only(1e-3, 1e-3, 1e-3);
    try {
        cn_step(s, field, cfg);
        FAIL() << "expected a positivity failure";
    } catch (const PositivityError& e) {
        EXPECT_EQ(e.kind(), ErrorKind::PositivityFailure);
        EXPECT_EQ(e.node(), 4u);
        EXPECT_LT(e.value(), 0.0);
    }
}

TEST(Step, OverflowIsBlowup) {
    const auto g = make_grid(1.0, 5);
    const auto field = constant_field(g, 1e308, 1e308, 1.0, 1.0);
    auto s = make_state(g, std::vector<double>(5, 1e10), std::vector<double>(5, 1e10));
    SimConfig cfg;
    cfg.epsilon = 1.0;
    try {
        cn_step(s, field, cfg);
        FAIL() << "expected a blowup";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NumericalBlowup);
    }
}

TEST(Config, StepRatioGuard) {
    SimConfig c;
    c.epsilon = 0.01;
    c.dt = 0.5;
    EXPECT_THROW(c.validate(), Error);
    c.allow_any_step_ratio = true;
    EXPECT_NO_THROW(c.validate());
    c = {};
    c.d1 = c.d2 = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    c.epsilon = 0.0;
    EXPECT_THROW(c.validate(), Error);
    c = {};
    EXPECT_DOUBLE_EQ(c.step(), c.epsilon);
}

TEST(InitialData, Gaussian) {
    const auto g = make_grid(10.0, 1001);
    const auto s = default_initial_state(g, 0.01, GaussianInit{3.0, 10.0, 0.2});
    EXPECT_DOUBLE_EQ(s.n1[300], 0.2);
    EXPECT_NEAR(s.n1[400], 0.2 * std::exp(-10.0), 1e-17);
    EXPECT_EQ(s.n1, s.n2);
    EXPECT_NEAR(s.N, 2.0 * 0.2 * std::sqrt(std::numbers::pi / 10.0), 1e-10);

    const auto zero = default_initial_state(g, 0.01, GaussianInit{3.0, 10.0, 0.0});
    EXPECT_EQ(zero.N, 0.0);
}

TEST(InitialData, HopfCole) {
    const auto g = make_grid(2.0, 3);
    const auto s = default_initial_state(g, 0.01, HopfColeGaussianInit{1.0, 0.0, 0.0});
    EXPECT_DOUBLE_EQ(s.n1[0], 1.0);
    EXPECT_NEAR(s.n1[1] / std::exp(-100.0), 1.0, 1e-12);
    EXPECT_THROW(default_initial_state(g, 0.0, HopfColeGaussianInit{}), Error);
}

TEST(Simulate, SingleStepGivesTwoSnapshots) {
    const auto g = make_grid(10.0, 51);
    const auto field = constant_field(g, 1, 1, 0.5, 0.5);
    SimConfig cfg;
    cfg.epsilon = 0.1;
    cfg.t_end = 0.1;
    const auto traj = simulate(default_initial_state(g, 0.1, GaussianInit{}), field, cfg);
    ASSERT_EQ(traj.snapshots.size(), 2u);
    EXPECT_EQ(traj.series.size(), 2u);
    EXPECT_DOUBLE_EQ(traj.snapshots.back().t, 0.1);
}

TEST(Simulate, CadenceAndRecordTimes) {
    const auto g = make_grid(10.0, 51);
    const auto field = constant_field(g, 1, 1, 0.5, 0.5);
    SimConfig cfg;
    cfg.epsilon = 0.1;
    cfg.t_end = 1.0;
    cfg.record_every = 5;
    cfg.record_times = {0.33};
    const auto traj = simulate(default_initial_state(g, 0.1, GaussianInit{}), field, cfg);
    ASSERT_EQ(traj.snapshots.size(), 4u);
    EXPECT_NEAR(traj.snapshots[1].t, 0.3, 1e-12);
    EXPECT_NEAR(traj.snapshots[2].t, 0.5, 1e-12);
    EXPECT_EQ(traj.series.size(), 11u);
}

TEST(Simulate, HomogeneousLogisticLimit) {
    // r = 1, delta = 0.5: every node grows to N = r + delta on the whole domain
    const auto g = make_grid(1.0, 21);
    const auto field = constant_field(g, 1, 1, 0.5, 0.5);
    SimConfig cfg;
    cfg.epsilon = 0.1;
    cfg.t_end = 20.0;
    cfg.mass_bounds = MassBounds{1.5, 1.5};
    auto traj = simulate(make_state(g, std::vector<double>(21, 0.1), std::vector<double>(21, 0.2)), field, cfg);
    EXPECT_NEAR(traj.series.back().N, 1.5, 1e-9);
    // the start is far below the bound; only the early part is flagged
    for (const auto& e : traj.mass_excursions) EXPECT_LT(e.t, 5.0);
}

TEST(Simulate, DnaRunStaysNonNegative) {
    const DnaParams p;
    const auto g = make_grid(10.0, 401);
    const auto field = build_dna_coefficients(p, g, default_quadrature(p.gamma_d));
    SimConfig cfg;
    cfg.epsilon = 0.01;
    cfg.t_end = 2.0;
    const auto traj = simulate(default_initial_state(g, cfg.epsilon, GaussianInit{3.5, 1.0, 0.2}), field, cfg);
    for (const auto& s : traj.snapshots)
        for (std::size_t k = 0; k < g.nx; ++k) {
            EXPECT_GE(s.n1[k], 0.0);
            EXPECT_GE(s.n2[k], 0.0);
        }
}

TEST(Scalar, ConstantFitnessLimit) {
    const auto g = make_grid(1.0, 21);
    const auto field = constant_field(g, 0.6, 0.6, 0.3, 0.3);  // r_inf = 0.9
    SimConfig cfg;
    cfg.epsilon = 0.1;
    cfg.t_end = 50.0;
    const auto traj = solve_effective_scalar(std::vector<double>(21, 0.2), field, cfg);
    EXPECT_NEAR(traj.series.back().N, 0.9, 1e-7);
    ASSERT_TRUE(traj.stationary_time.has_value());
    EXPECT_LT(*traj.stationary_time, 50.0);
    EXPECT_EQ(traj.snapshots.back().n2, std::vector<double>(21, 0.0));
}

TEST(Scalar, ZeroReactionConservesMass) {
    const auto g = make_grid(10.0, 101);
    const auto field = constant_field(g, 1, 1, 1, 1);
    auto cfg = diffusion_only(1.0, 0.5, 10.0);
    const auto w0 = default_initial_state(g, 1.0, GaussianInit{2.0, 1.0, 1.0}).n1;
    ScalarOptions opts;
    opts.stop_when_stationary = false;
    const auto traj = solve_effective_scalar(w0, field, cfg, opts);
    EXPECT_NEAR(traj.series.back().N, traj.series.front().N, 1e-12 * traj.series.front().N);
}

TEST(Scalar, RequiresEqualDiffusion) {
    const auto g = make_grid(1.0, 5);
    SimConfig cfg;
    cfg.d1 = 0.5;
    EXPECT_THROW(solve_effective_scalar(std::vector<double>(5, 1.0), constant_field(g, 1, 1, 1, 1), cfg), Error);
}
