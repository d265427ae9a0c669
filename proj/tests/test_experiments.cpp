#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "msconstrain/experiments.hpp"

using namespace msconstrain;

TEST(CircleSolution, Examples) {
  const std::vector<ModeSpec> one{{{1, 0}, 1.0, 0.0}};
  const auto u = analytic_circle_solution(one, {0.0, 0.0}, 0.0);
  EXPECT_DOUBLE_EQ(u[0], std::cos(1.0));
  EXPECT_DOUBLE_EQ(u[1], std::sin(1.0));
  // Travelling along x at unit speed.
  const auto v = analytic_circle_solution(one, {0.7, 0.3}, 0.7);
  EXPECT_NEAR(v[0], std::cos(1.0), 1e-15);

  const auto modes = table1_modes();
  ASSERT_EQ(modes.size(), 3u);
  EXPECT_DOUBLE_EQ(modes[1].frequency(), std::sqrt(5.0));
  const auto w = analytic_circle_solution(modes, {1.0, 2.0}, 0.4);
  EXPECT_NEAR(w[0] * w[0] + w[1] * w[1], 1.0, 1e-15);
}

TEST(CircleSolution, SatisfiesTheWaveEquationForThePhase) {
  // theta is a sum of plane waves with |k| = omega, so theta_tt = lap theta.
  const auto modes = table1_modes();
  const std::array<double, 2> x{0.4, 1.3};
  const double t = 0.2, h = 1e-4;
  auto th = [&](double dx, double dy, double dt) {
    return circle_phase(modes, {x[0] + dx, x[1] + dy}, t + dt);
  };
  const double c = th(0, 0, 0);
  const double tt = (th(0, 0, h) - 2 * c + th(0, 0, -h)) / (h * h);
  const double lap = (th(h, 0, 0) + th(-h, 0, 0) + th(0, h, 0) + th(0, -h, 0) - 4 * c) / (h * h);
  EXPECT_NEAR(tt, lap, 1e-5);
}

TEST(FitTimeStep, LandsExactlyOnFinalTime) {
  const auto [dt, levels] = fit_time_step(0.3, 1.0);
  EXPECT_EQ(levels, 4u);
  EXPECT_DOUBLE_EQ(dt, 0.25);
  EXPECT_EQ(fit_time_step(0.25, 1.0).second, 4u);
  EXPECT_EQ(fit_time_step(0.1, 0.0).second, 0u);
  EXPECT_THROW(fit_time_step(0.0, 1.0), ConfigError);
  EXPECT_THROW(fit_time_step(0.1, -1.0), ConfigError);
}

TEST(FitOrder, SyntheticPowerLaw) {
  const std::vector<std::size_t> ns{16, 32, 64, 128};
  std::vector<double> errs;
  for (std::size_t n : ns) errs.push_back(3.0 / double(n * n));
  EXPECT_NEAR(fit_order(ns, errs), 2.0, 1e-12);
  EXPECT_THROW(fit_order(std::span(ns).first(1), std::span(errs).first(1)), ConfigError);
  EXPECT_THROW(fit_order(ns, std::span(errs).first(3)), ConfigError);
  errs[2] = 0.0;
  EXPECT_THROW(fit_order(ns, errs), DetectionError);
}

TEST(ConvergenceStudy, SecondOrderOnTheTorus) {
  const std::vector<std::size_t> ns{16, 32, 64};
  const auto modes = table1_modes();
  const auto r = convergence_study(ns, 0.5, 1.0, modes);
  EXPECT_TRUE(r.monotone);
  EXPECT_GE(r.slope, 1.8);
  EXPECT_LE(r.slope, 2.4);
  const std::vector<std::size_t> bad{32, 16};
  EXPECT_THROW(convergence_study(bad, 0.5, 1.0, modes), ConfigError);
}

TEST(Breather, StartingLevels) {
  const Grid g = Grid::line(64);
  const BreatherSpec spec;
  const auto [u0, u1] = breather_levels(spec, g);
  for (std::size_t n = 0; n < 64; ++n) {
    const double th = node_angle(g, n);
    EXPECT_NEAR(u0[n][0], std::cos(7 * th), 1e-15);
    EXPECT_EQ(u0[n][2], 0.0);
    const double norm2 = u1[n][0] * u1[n][0] + u1[n][1] * u1[n][1] + u1[n][2] * u1[n][2];
    const double z = 1e-4 * std::sin(5 * th);
    EXPECT_NEAR(norm2, 1.0 + z * z, 1e-15);
  }
  const auto [p0, p1] = breather_initial(spec, g);
  EXPECT_LE(max_constraint_residual(p1, QuadricConstraint{BilinearForm::euclidean(3)}), 1e-15);
  EXPECT_THROW(breather_levels(BreatherSpec{5, 5}, g), ConfigError);
  EXPECT_THROW(breather_levels(spec, Grid::line(8, 1.0, Boundary::neumann)), ConfigError);
}

TEST(Breather, ReferenceMap) {
  const BreatherSpec spec;
  EXPECT_DOUBLE_EQ(spec.growth(), std::sqrt(24.0));
  for (double th : {0.0, 0.3, 1.1, 2.5}) {
    const auto u = breather_reference(spec, th, 0.0);
    EXPECT_NEAR(u[0], std::cos(7 * th), 1e-14);
    EXPECT_NEAR(u[1], std::sin(7 * th), 1e-14);
    EXPECT_NEAR(u[2], 0.0, 1e-14);
    for (double s : {0.2, 1.5, -3.0}) {
      const auto v = breather_reference(spec, th, s);
      EXPECT_NEAR(v[0] * v[0] + v[1] * v[1] + v[2] * v[2], 1.0, 1e-14);
    }
  }
  // s is odd in sin(j theta) and tiny far in the past.
  EXPECT_NEAR(breather_s(spec, 0.4, 0.0), -breather_s(spec, -0.4, 0.0), 1e-9);
  EXPECT_LE(std::abs(breather_s(spec, 0.4, -5.0)), 1e-8);
}

TEST(Blowup, ProfileValues) {
  const auto c = blowup_profile(0.0, 0.0);
  EXPECT_EQ(c[0], 0.0);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(c[2], 1.0);
  for (auto [x, y] : {std::pair{0.5, 0.0}, {0.4, 0.4}, {-0.3, 0.45}}) {
    const auto p = blowup_profile(x, y);
    EXPECT_NEAR(p[2], -1.0, 1e-15);
  }
  for (auto [x, y] : {std::pair{0.1, 0.2}, {-0.2, 0.05}}) {
    const auto p = blowup_profile(x, y);
    EXPECT_NEAR(p[0] * p[0] + p[1] * p[1] + p[2] * p[2], 1.0, 1e-14);
  }
}

TEST(Blowup, ProfileIsEquivariant) {
  const double x = 0.17, y = -0.08, a = 0.9;
  const auto p = blowup_profile(x, y);
  const auto q = blowup_profile(std::cos(a) * x - std::sin(a) * y,
                                std::sin(a) * x + std::cos(a) * y);
  EXPECT_NEAR(q[0], std::cos(a) * p[0] - std::sin(a) * p[1], 1e-14);
  EXPECT_NEAR(q[1], std::sin(a) * p[0] + std::cos(a) * p[1], 1e-14);
  EXPECT_NEAR(q[2], p[2], 1e-14);
  EXPECT_THROW(blowup_initial(Grid::line(8)), ConfigError);
}

TEST(Poincare, LiftAndProjection) {
  const auto p = poincare_lift(0.5);
  EXPECT_DOUBLE_EQ(p[0], 4.0 / 3.0);
  EXPECT_DOUBLE_EQ(p[1], 0.0);
  EXPECT_DOUBLE_EQ(p[2], 5.0 / 3.0);
  const std::complex<double> w(0.2, -0.6);
  const auto q = poincare_lift(w);
  EXPECT_NEAR(bilinear_dot(q, q, BilinearForm::minkowski(3)), 1.0, 1e-14);
  EXPECT_LE(std::abs(poincare_project(q) - w), 1e-15);
  EXPECT_THROW(poincare_lift(1.0), ConfigError);
  EXPECT_THROW(poincare_lift({0.8, 0.8}), ConfigError);
}

TEST(Poincare, HyperbolicInitialDataStaysInsideTheDisk) {
  const Grid g = Grid::line(256);
  const Field u = hyperbolic_initial(g, 0.369);
  EXPECT_LE(max_constraint_residual(u, QuadricConstraint{BilinearForm::minkowski(3)}), 1e-12);
  for (std::size_t n = 0; n < 256; ++n) EXPECT_GE(u[n][2], 1.0);
  EXPECT_THROW(hyperbolic_initial(g, 1.0), ConfigError);
}

TEST(CpDemo, LoopIsAFieldOfRankOneProjectors) {
  const Grid g = Grid::line(16);
  for (int n : {1, 2}) {
    const Field u = cp_demo_initial(g, n);
    const auto m = static_cast<std::size_t>(n + 1);
    for (std::size_t k = 0; k < 16; ++k) {
      Eigen::SelfAdjointEigenSolver<CMatrix> es(matrix_from_real(u[k], m));
      for (std::size_t i = 0; i + 1 < m; ++i) EXPECT_NEAR(es.eigenvalues()(i), 0.0, 1e-14);
      EXPECT_NEAR(es.eigenvalues()(m - 1), 1.0, 1e-14);
    }
  }
  EXPECT_THROW(cp_demo_initial(g, 0), ConfigError);
}

TEST(CpDemo, ConstantLoopIsStationary) {
  const Grid g = Grid::line(16);
  CVector psi(2);
  psi << std::complex<double>(0.6, 0.0), std::complex<double>(0.0, 0.8);
  const Field u = cp_field(g, 1, [&](double) { return psi; });
  const Constraint c = ProjectiveConstraint{1};
  SimState s{g, 0.5 * g.spacing(0), 1, u, u};
  for (int i = 0; i < 10; ++i) s = shake_step(s, zero_potential(), c);
  for (std::size_t k = 0; k < u.data().size(); ++k)
    EXPECT_NEAR(s.curr.data()[k], u.data()[k], 1e-15);
}

TEST(Registry, SevenExperimentsWithDefaults) {
  const auto& names = experiment_names();
  EXPECT_EQ(names.size(), 7u);
  for (const auto& n : names) EXPECT_EQ(experiment_config(n).experiment, n);
  EXPECT_THROW(experiment_config("nope"), ConfigError);

  const RunConfig b = experiment_config("breather");
  EXPECT_EQ(b.grid.points(0), 512u);
  EXPECT_DOUBLE_EQ(b.param("l", 0), 7.0);
  const auto [dt, steps] = resolve_steps(b);
  EXPECT_DOUBLE_EQ(dt, 0.5 / 512.0);
  EXPECT_EQ(steps, 16895u);

  const RunConfig h = experiment_config("hyperbolic");
  EXPECT_TRUE(ambient_form(h.constraint).size() == 3 && !ambient_form(h.constraint).is_euclidean());

  const RunConfig blow = experiment_config("blowup");
  EXPECT_EQ(blow.grid.boundary(0), Boundary::neumann);
  EXPECT_DOUBLE_EQ(blow.grid.coordinate(0, 0), -0.5);
  EXPECT_TRUE(blow.binary_snapshots);
}

TEST(Registry, InitialStatesSatisfyTheConstraint) {
  for (const auto& name : experiment_names()) {
    RunConfig c = experiment_config(name);
    if (c.grid.dim() == 2)
      c.grid = c.grid.boundary(0) == Boundary::periodic
                   ? Grid::plane(16, 16, two_pi, two_pi, Boundary::periodic, Boundary::periodic)
                   : Grid::plane(17, 17, 1.0, 1.0, Boundary::neumann, Boundary::neumann, -0.5,
                                 -0.5);
    const auto [dt, steps] = resolve_steps(c);
    const SimState s = initial_state(c, dt);
    EXPECT_LE(max_constraint_residual(s.prev, c.constraint), 1e-12) << name;
    EXPECT_LE(max_constraint_residual(s.curr, c.constraint), 1e-12) << name;
  }
  RunConfig bad = experiment_config("breather");
  bad.constraint = QuadricConstraint{BilinearForm::euclidean(2)};
  EXPECT_THROW(initial_state(bad, 0.01), ConfigError);
  bad.initial = "nope";
  EXPECT_THROW(initial_state(bad, 0.01), ConfigError);
}

TEST(Registry, ZeroFinalTimeReportsLevelZero) {
  RunConfig c = experiment_config("potential");
  c.final_time = 0.0;
  int snaps = 0, records = 0;
  RunSinks sinks;
  sinks.snapshot = [&](const SimState& s) {
    ++snaps;
    EXPECT_EQ(s.step, 0u);
  };
  sinks.diagnostics = [&](const DiagnosticsRecord& r) {
    ++records;
    EXPECT_EQ(r.time, 0.0);
  };
  const RunResult r = run(c, sinks, nullptr);
  EXPECT_EQ(snaps, 1);
  EXPECT_EQ(records, 1);
  EXPECT_FALSE(r.failure.has_value());
  EXPECT_EQ(r.state.curr, tilted_circle_initial(std::numbers::pi / 4, c.grid));
}
