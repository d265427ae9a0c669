// Initial data, analytic references and the registry of reproducible runs.
//
// One-dimensional runs live on the unit circle x in [0,1); formulas are written
// in the angle theta = 2 pi x / L. The torus runs use [0, 2pi)^2 and the
// blow-up run the Neumann box [-1/2, 1/2]^2.
#pragma once

#include <boost/math/quadrature/trapezoidal.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msconstrain/constraints.hpp"
#include "msconstrain/core.hpp"
#include "msconstrain/diagnostics.hpp"
#include "msconstrain/potential.hpp"
#include "msconstrain/wavemap.hpp"

namespace msconstrain {

/// Angle coordinate of a node on a periodic axis.
inline double node_angle(const Grid& g, std::size_t node, int axis = 0) {
  return two_pi * (g.coordinate(node, axis) - g.origin(axis)) / g.length(axis);
}

// ---------------------------------------------------------------------------
// Torus to circle: exact solutions u = (cos theta, sin theta), theta a
// superposition of plane waves.

struct ModeSpec {
  std::array<int, 2> k{1, 1};
  double amplitude = 1.0;
  double phase = 0.0;

  double frequency() const { return std::hypot(double(k[0]), double(k[1])); }
};

/// Wavenumbers, amplitudes and phases of the reference convergence study.
inline std::vector<ModeSpec> table1_modes() {
  return {{{1, 1}, 1.0, 0.0}, {{2, 1}, 0.5, 0.5}, {{-1, 1}, 0.2, 0.8}};
}

inline double circle_phase(std::span<const ModeSpec> modes, std::array<double, 2> x,
                           double t) {
  double theta = 0.0;
  for (const auto& m : modes)
    theta += m.amplitude *
             std::cos(m.k[0] * x[0] + m.k[1] * x[1] - m.frequency() * t - m.phase);
  return theta;
}

inline std::array<double, 2> analytic_circle_solution(std::span<const ModeSpec> modes,
                                                      std::array<double, 2> x, double t) {
  const double theta = circle_phase(modes, x, t);
  return {std::cos(theta), std::sin(theta)};
}

/// Exact circle-valued solution sampled on the grid at time t.
inline Field sample_circle_solution(const Grid& g, std::span<const ModeSpec> modes,
                                    double t) {
  Field u(g.size(), 2);
  for (std::size_t n = 0; n < g.size(); ++n) {
    std::array<double, 2> x{g.coordinate(n, 0), g.dim() == 2 ? g.coordinate(n, 1) : 0.0};
    const auto v = analytic_circle_solution(modes, x, t);
    u[n][0] = v[0];
    u[n][1] = v[1];
  }
  return u;
}

/// L2 norm (rectangle rule) of the nodewise difference.
inline double l2_distance(const Field& a, const Field& b, const Grid& g) {
  a.check_same(b);
  double acc = 0.0;
  for (std::size_t k = 0; k < a.data().size(); ++k) {
    const double d = a.data()[k] - b.data()[k];
    acc += d * d;
  }
  return std::sqrt(acc * g.cell_volume());
}

/// Number of levels and the adjusted step so that level count * dt = T.
/// The step never exceeds `dt_max`.
inline std::pair<double, std::size_t> fit_time_step(double dt_max, double final_time) {
  if (!(dt_max > 0.0)) throw ConfigError("time step must be positive");
  if (final_time < 0.0) throw ConfigError("final time must be non-negative");
  if (final_time == 0.0) return {dt_max, 0};
  const auto levels = static_cast<std::size_t>(std::ceil(final_time / dt_max - 1e-9));
  return {final_time / static_cast<double>(levels), levels};
}

/// Negated least-squares slope of log(error) against log(N).
inline double fit_order(std::span<const std::size_t> ns, std::span<const double> errors) {
  if (ns.size() != errors.size() || ns.size() < 2)
    throw ConfigError("fit_order: need at least two (N, error) pairs");
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    if (!(errors[k] > 0.0) || !std::isfinite(errors[k]))
      throw DetectionError("fit_order: errors must be positive and finite");
    mx += std::log(static_cast<double>(ns[k]));
    my += std::log(errors[k]);
  }
  mx /= static_cast<double>(ns.size());
  my /= static_cast<double>(ns.size());
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < ns.size(); ++k) {
    const double x = std::log(static_cast<double>(ns[k])) - mx;
    sxx += x * x;
    sxy += x * (std::log(errors[k]) - my);
  }
  if (sxx == 0.0) throw ConfigError("fit_order: all N are equal");
  return -sxy / sxx;
}

struct ConvergenceResult {
  std::vector<std::size_t> ns;
  std::vector<double> errors;
  double slope = 0.0;
  bool monotone = true;
};

/// Error of the scheme against the exact torus-to-circle solution in
/// L^inf(0,T; L^2) for a single resolution. Both starting levels are exact.
inline double torus_circle_error(std::size_t n, double courant, double final_time,
                                 std::span<const ModeSpec> modes) {
  const Grid g = Grid::plane(n, n, two_pi, two_pi, Boundary::periodic, Boundary::periodic);
  const auto [dt, levels] = fit_time_step(courant * g.spacing(0), final_time);
  const Constraint c = QuadricConstraint{BilinearForm::euclidean(2)};
  const Potential pot = zero_potential();
  SimState s{g, dt, 1, sample_circle_solution(g, modes, 0.0),
             sample_circle_solution(g, modes, dt)};
  double worst = 0.0;
  for (std::size_t i = 2; i <= levels; ++i) {
    s = shake_step(s, pot, c);
    worst = std::max(worst, l2_distance(s.curr, sample_circle_solution(g, modes, s.time()), g));
  }
  return worst;
}

inline ConvergenceResult convergence_study(std::span<const std::size_t> ns, double courant,
                                           double final_time,
                                           std::span<const ModeSpec> modes) {
  if (ns.size() < 2) throw ConfigError("convergence study needs at least two resolutions");
  for (std::size_t k = 1; k < ns.size(); ++k)
    if (ns[k] <= ns[k - 1]) throw ConfigError("resolutions must be increasing");
  ConvergenceResult r;
  r.ns.assign(ns.begin(), ns.end());
  for (std::size_t n : ns) r.errors.push_back(torus_circle_error(n, courant, final_time, modes));
  for (std::size_t k = 1; k < r.errors.size(); ++k)
    if (r.errors[k] >= r.errors[k - 1]) r.monotone = false;
  r.slope = fit_order(r.ns, r.errors);
  return r;
}

// ---------------------------------------------------------------------------
// Circle to sphere breathers

struct BreatherSpec {
  int winding = 7;     // l
  int frequency = 5;   // j
  double epsilon = 1e-4;

  void validate() const {
    if (frequency < 1 || frequency >= winding)
      throw ConfigError("breather needs 1 <= j <= l - 1");
    if (!(epsilon > 0.0)) throw ConfigError("breather epsilon must be positive");
  }
  double growth() const {
    return std::sqrt(double(winding) * winding - double(frequency) * frequency);
  }
};

/// u0 = (cos l theta, sin l theta, 0); u1 = u0 + (0, 0, eps sin j theta), the
/// latter projected along u0 by the caller (start_from_levels).
inline std::pair<Field, Field> breather_levels(const BreatherSpec& spec, const Grid& g) {
  spec.validate();
  if (g.dim() != 1 || g.boundary(0) != Boundary::periodic)
    throw ConfigError("breather data needs a periodic 1D grid");
  Field u0(g.size(), 3), u1(g.size(), 3);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double th = node_angle(g, n);
    u0[n][0] = u1[n][0] = std::cos(spec.winding * th);
    u0[n][1] = u1[n][1] = std::sin(spec.winding * th);
    u1[n][2] = spec.epsilon * std::sin(spec.frequency * th);
  }
  return {std::move(u0), std::move(u1)};
}

/// (u0, projected u1).
inline std::pair<Field, Field> breather_initial(const BreatherSpec& spec, const Grid& g) {
  auto [u0, u1] = breather_levels(spec, g);
  project_field(u0, u1, QuadricConstraint{BilinearForm::euclidean(3)}, 0.0);
  return {std::move(u0), std::move(u1)};
}

/// Sine-Gordon breather alpha(theta, t) = 4 atan(g/j sin(j theta)/cosh(g t)).
inline double breather_alpha(const BreatherSpec& spec, double theta, double t) {
  const double g = spec.growth();
  return 4.0 * std::atan(g / spec.frequency * std::sin(spec.frequency * theta) /
                         std::cosh(g * t));
}

/// s(theta, t) = int_{-inf}^t l sin(alpha/2) d tau. Adaptive trapezoid from
/// t_min = -20/g plus the exponential tail 2 (l/j) e^{g t_min} sin(j theta).
inline double breather_s(const BreatherSpec& spec, double theta, double t) {
  const double g = spec.growth();
  const double l = spec.winding;
  const double j = spec.frequency;
  const double t_min = -20.0 / g;
  auto tail = [&](double upper) { return 2.0 * l / j * std::exp(g * upper) * std::sin(j * theta); };
  if (t <= t_min) return tail(t);
  auto integrand = [&](double tau) { return l * std::sin(0.5 * breather_alpha(spec, theta, tau)); };
  const double body =
      boost::math::quadrature::trapezoidal(integrand, t_min, t, 1e-10);
  return tail(t_min) + body;
}

/// Breather wave map u_b(theta, s) with tan kappa = (l/j) tan(j theta).
inline std::array<double, 3> breather_reference(const BreatherSpec& spec, double theta,
                                                double s) {
  const double l = spec.winding;
  const double j = spec.frequency;
  const double kappa = std::atan2(l * std::sin(j * theta), j * std::cos(j * theta));
  const double ck = std::cos(kappa), sk = std::sin(kappa);
  const double phi = l * theta - kappa;
  if (std::abs(sk) < 1e-300) return {ck * std::cos(phi), ck * std::sin(phi), 0.0};
  const double r = s / sk;
  return {ck * std::cos(phi) - sk * std::cos(r) * std::sin(phi),
          ck * std::sin(phi) + sk * std::cos(r) * std::cos(phi), sk * std::sin(r)};
}

// ---------------------------------------------------------------------------
// Blow-up, potential and hyperbolic data

/// Equivariant data u0 = (2 x1 a, 2 x2 a, a^2 - r^2)/(a^2 + r^2) with
/// a(r) = (1 - 2r)^4 for r <= 1/2 and 0 beyond.
inline std::array<double, 3> blowup_profile(double x1, double x2) {
  const double r = std::hypot(x1, x2);
  const double a = r <= 0.5 ? std::pow(1.0 - 2.0 * r, 4) : 0.0;
  const double den = a * a + r * r;
  return {2.0 * x1 * a / den, 2.0 * x2 * a / den, (a * a - r * r) / den};
}

inline Field blowup_initial(const Grid& g) {
  if (g.dim() != 2) throw ConfigError("blow-up data needs a 2D grid");
  Field u(g.size(), 3);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto p = blowup_profile(g.coordinate(n, 0), g.coordinate(n, 1));
    std::copy(p.begin(), p.end(), u[n].begin());
  }
  return u;
}

/// Single winding around a great circle tilted by `angle` from the equator.
inline Field tilted_circle_initial(double angle, const Grid& g) {
  if (g.dim() != 1 || g.boundary(0) != Boundary::periodic)
    throw ConfigError("tilted circle needs a periodic 1D grid");
  Field u(g.size(), 3);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const double th = node_angle(g, n);
    u[n][0] = std::cos(th);
    u[n][1] = std::sin(th) * std::cos(angle);
    u[n][2] = std::sin(th) * std::sin(angle);
  }
  return u;
}

/// Inverse stereographic map from the Poincare disk to the upper sheet of
/// -x^2 - y^2 + z^2 = 1.
inline std::array<double, 3> poincare_lift(std::complex<double> w) {
  const double r2 = std::norm(w);
  if (!(r2 < 1.0)) throw ConfigError("point outside Poincare disk");
  const double den = 1.0 - r2;
  return {2.0 * w.real() / den, 2.0 * w.imag() / den, (1.0 + r2) / den};
}

inline std::complex<double> poincare_project(std::span<const double> p) {
  return {p[0] / (1.0 + p[2]), p[1] / (1.0 + p[2])};
}

/// z0(theta) = e^{i theta} + 0.3 e^{8 i theta} + 0.2 e^{4 i theta}.
inline std::complex<double> hyperbolic_curve(double theta) {
  using std::polar;
  return polar(1.0, theta) + polar(0.3, 8.0 * theta) + polar(0.2, 4.0 * theta);
}

inline Field hyperbolic_initial(const Grid& g, double scale) {
  if (g.dim() != 1 || g.boundary(0) != Boundary::periodic)
    throw ConfigError("hyperbolic data needs a periodic 1D grid");
  Field u(g.size(), 3);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto w = scale * hyperbolic_curve(node_angle(g, n));
    if (!(std::abs(w) < 1.0))
      throw ConfigError("scaled initial curve leaves the Poincare disk (|w| = " +
                        std::to_string(std::abs(w)) + ")");
    const auto p = poincare_lift(w);
    std::copy(p.begin(), p.end(), u[n].begin());
  }
  return u;
}

// ---------------------------------------------------------------------------
// CP^n demonstrator

/// Smooth closed loop in C^{n+1}: Psi_0 = cos theta, Psi_1 = sin theta e^{2 i theta},
/// Psi_k = 0.3 sin(k theta) e^{i k theta} for k >= 2.
inline CVector cp_loop_psi(double theta, int n) {
  CVector psi(n + 1);
  psi(0) = std::cos(theta);
  if (n >= 1) psi(1) = std::polar(std::sin(theta), 2.0 * theta);
  for (int k = 2; k <= n; ++k) psi(k) = std::polar(0.3 * std::sin(k * theta), k * theta);
  return psi;
}

/// Field of projectors embed_cp(psi(theta_n)).
template <typename PsiFn>
Field cp_field(const Grid& g, int n, PsiFn&& psi) {
  const std::size_t m = static_cast<std::size_t>(n + 1);
  Field u(g.size(), 2 * m * m);
  for (std::size_t k = 0; k < g.size(); ++k)
    matrix_to_real(embed_cp(psi(node_angle(g, k))), u[k]);
  return u;
}

inline Field cp_demo_initial(const Grid& g, int n) {
  if (n < 1) throw ConfigError("CP^n demo needs n >= 1");
  if (g.dim() != 1 || g.boundary(0) != Boundary::periodic)
    throw ConfigError("CP^n demo needs a periodic 1D grid");
  return cp_field(g, n, [n](double th) { return cp_loop_psi(th, n); });
}

// ---------------------------------------------------------------------------
// Run configurations and the experiment registry

struct RunConfig {
  std::string experiment = "custom";
  Grid grid = Grid::line(64);
  double courant = 0.5;
  std::optional<double> dt;  // overrides courant when present
  double final_time = 1.0;
  Constraint constraint = QuadricConstraint{BilinearForm::euclidean(3)};
  std::string potential = "zero";
  std::string initial = "breather";
  std::map<std::string, double> params;
  std::size_t snapshot_every = 0;
  std::size_t diagnostics_every = 1;
  bool binary_snapshots = false;

  double param(const std::string& key, double fallback) const {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
  }
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "convergence2d", "torus-energy", "breather", "blowup",
      "potential",     "hyperbolic",   "cp-demo"};
  return names;
}

/// Default configuration of a registered experiment.
inline RunConfig experiment_config(const std::string& name) {
  RunConfig c;
  c.experiment = name;
  if (name == "convergence2d" || name == "torus-energy") {
    c.grid = Grid::plane(128, 128, two_pi, two_pi, Boundary::periodic, Boundary::periodic);
    c.constraint = QuadricConstraint{BilinearForm::euclidean(2)};
    c.initial = "circle-modes";
    c.final_time = name == "convergence2d" ? 1.0 : 11.0;
    c.diagnostics_every = 1;
    c.snapshot_every = 0;
  } else if (name == "breather") {
    c.grid = Grid::line(512);
    c.initial = "breather";
    c.params = {{"l", 7}, {"j", 5}, {"epsilon", 1e-4}};
    c.final_time = 16.5;
    c.snapshot_every = 8;
  } else if (name == "blowup") {
    c.grid = Grid::plane(128, 128, 1.0, 1.0, Boundary::neumann, Boundary::neumann, -0.5, -0.5);
    c.initial = "blowup";
    c.final_time = 0.5;
    c.snapshot_every = 8;
    c.binary_snapshots = true;
  } else if (name == "potential") {
    c.grid = Grid::line(512);
    c.initial = "tilted-circle";
    c.potential = "axis";
    c.params = {{"angle", std::numbers::pi / 4}};
    c.final_time = 0.5;
    c.snapshot_every = 16;
  } else if (name == "hyperbolic") {
    c.grid = Grid::line(256);
    c.constraint = QuadricConstraint{BilinearForm::minkowski(3)};
    c.initial = "hyperbolic";
    c.params = {{"scale", 0.369}};
    c.final_time = 12.0;
    c.snapshot_every = 64;
  } else if (name == "cp-demo") {
    c.grid = Grid::line(64);
    c.constraint = ProjectiveConstraint{1, CpMode::directional};
    c.initial = "cp-loop";
    c.final_time = 1001.0 * 0.5 / 64.0;
    c.snapshot_every = 50;
  } else {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  return c;
}

/// Time step and the number of scheme steps after the two starting levels.
inline std::pair<double, std::size_t> resolve_steps(const RunConfig& c) {
  double h = c.grid.spacing(0);
  for (int a = 1; a < c.grid.dim(); ++a) h = std::min(h, c.grid.spacing(a));
  const double dt_max = c.dt.value_or(c.courant * h);
  const auto [dt, levels] = fit_time_step(dt_max, c.final_time);
  return {dt, levels > 1 ? levels - 1 : 0};
}

/// Starting levels (u^0, u^1) for a configuration.
inline SimState initial_state(const RunConfig& c, double dt) {
  const Potential pot = potential_by_id(c.potential);
  const Grid& g = c.grid;
  const std::size_t width = ambient_width(c.constraint);
  auto at_rest = [&](const Field& u0) {
    return start_from_velocity(g, u0, Field(u0.nodes(), u0.width()), pot, c.constraint, dt);
  };
  auto require_width = [&](std::size_t w) {
    if (width != w)
      throw ConfigError("initial data '" + c.initial + "' needs a target of width " +
                        std::to_string(w));
  };
  if (c.initial == "circle-modes") {
    require_width(2);
    const auto modes = table1_modes();
    return SimState{g, dt, 1, sample_circle_solution(g, modes, 0.0),
                    sample_circle_solution(g, modes, dt)};
  }
  if (c.initial == "breather") {
    require_width(3);
    BreatherSpec spec{static_cast<int>(c.param("l", 7)), static_cast<int>(c.param("j", 5)),
                      c.param("epsilon", 1e-4)};
    auto [u0, u1] = breather_levels(spec, g);
    return start_from_levels(g, u0, std::move(u1), c.constraint, dt);
  }
  if (c.initial == "blowup") {
    require_width(3);
    return at_rest(blowup_initial(g));
  }
  if (c.initial == "tilted-circle") {
    require_width(3);
    return at_rest(tilted_circle_initial(c.param("angle", std::numbers::pi / 4), g));
  }
  if (c.initial == "hyperbolic") {
    require_width(3);
    return at_rest(hyperbolic_initial(g, c.param("scale", 0.369)));
  }
  if (c.initial == "cp-loop") {
    const auto* p = std::get_if<ProjectiveConstraint>(&c.constraint);
    if (!p) throw ConfigError("cp-loop initial data needs a CP^n constraint");
    return at_rest(cp_demo_initial(g, p->n));
  }
  throw ConfigError("unknown initial data '" + c.initial + "'");
}

/// Runs a configuration end to end.
inline RunResult run(const RunConfig& c, const RunSinks& sinks = {},
                     std::ostream* warn = &std::cerr) {
  const auto [dt, steps] = resolve_steps(c);
  check_courant(c.grid, dt, warn);
  const SimState s0 = initial_state(c, dt);
  if (c.final_time == 0.0) {
    // Only level 0 exists at t = 0; it is reported with zero velocity.
    SimState at_zero{s0.grid, dt, 0, s0.prev, s0.prev};
    if (sinks.snapshot) sinks.snapshot(at_zero);
    if (sinks.diagnostics && c.diagnostics_every > 0)
      sinks.diagnostics(make_record(at_zero, c.constraint, potential_by_id(c.potential)));
    return RunResult{at_zero, 0, std::nullopt};
  }
  RunSettings settings{steps, c.snapshot_every, c.diagnostics_every};
  return run(s0, potential_by_id(c.potential), c.constraint, settings, sinks);
}

}  // namespace msconstrain
