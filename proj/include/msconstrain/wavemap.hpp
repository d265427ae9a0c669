// Reduced Euler box scheme for wave maps: a leapfrog predictor for the
// unconstrained wave equation followed by a nodewise projection onto the
// target along the current position (SHAKE).
#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "msconstrain/constraints.hpp"
#include "msconstrain/core.hpp"
#include "msconstrain/diagnostics.hpp"
#include "msconstrain/potential.hpp"

namespace msconstrain {

/// A step that could not be projected. Carries the node and the time of the
/// level that was being computed.
class StepFailure : public NumericalError {
 public:
  StepFailure(const std::string& what, std::size_t node, double time)
      : NumericalError(what), node_(node), time_(time) {}
  std::size_t node() const { return node_; }
  double time() const { return time_; }

 private:
  std::size_t node_;
  double time_;
};

/// Unconstrained predictor 2u^i - u^{i-1} + dt^2 (Laplacian u^i - V'(u^i)).
inline Field leapfrog_predictor(const SimState& s, const Potential& pot) {
  Field next = laplacian(s.curr, s.grid);
  if (!pot.is_zero()) next -= potential_gradient(s.curr, pot);
  next *= s.dt * s.dt;
  const auto& c = s.curr.data();
  const auto& p = s.prev.data();
  auto& out = next.data();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += 2.0 * c[k] - p[k];
  return next;
}

/// Projects every node of `predicted` along the matching node of `reference`.
/// Multipliers are written to `multipliers` when given.
inline void project_field(const Field& reference, Field& predicted, const Constraint& c,
                          double time, std::vector<double>* multipliers = nullptr) {
  reference.check_same(predicted);
  if (multipliers) multipliers->assign(reference.nodes(), 0.0);
  for (std::size_t n = 0; n < reference.nodes(); ++n) {
    try {
      const double l = project_node(c, reference[n], predicted[n]);
      if (multipliers) (*multipliers)[n] = l;
    } catch (const NumericalError& e) {
      throw StepFailure(std::string(e.what()) + " at node " + std::to_string(n) +
                            ", t = " + std::to_string(time),
                        n, time);
    }
  }
}

/// One step of the scheme: (u^{i-1}, u^i) -> (u^i, u^{i+1}).
inline SimState shake_step(const SimState& s, const Potential& pot, const Constraint& c,
                           std::vector<double>* multipliers = nullptr) {
  check_on_grid(s.curr, s.grid);
  s.curr.check_same(s.prev);
  if (s.curr.width() != ambient_width(c))
    throw DimensionError("state width does not match the constraint");
  Field next = leapfrog_predictor(s, pot);
  const double t_next = static_cast<double>(s.step + 1) * s.dt;
  project_field(s.curr, next, c, t_next, multipliers);
  SimState out{s.grid, s.dt, s.step + 1, s.curr, std::move(next)};
  return out;
}

/// Second level from position and velocity by a projected Taylor step,
/// u^1 = P(u0 + dt v0 + dt^2/2 (Laplacian u0 - V'(u0))) along u0.
inline SimState start_from_velocity(const Grid& grid, const Field& u0, const Field& v0,
                                    const Potential& pot, const Constraint& c, double dt) {
  check_on_grid(u0, grid);
  u0.check_same(v0);
  if (u0.width() != ambient_width(c))
    throw DimensionError("initial field width does not match the constraint");
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  const BilinearForm form = ambient_form(c);
  for (std::size_t n = 0; n < u0.nodes(); ++n)
    if (std::abs(form.dot(u0[n], v0[n])) > 1e-10)
      throw ConfigError("initial velocity is not tangent at node " + std::to_string(n));
  Field acc = laplacian(u0, grid);
  if (!pot.is_zero()) acc -= potential_gradient(u0, pot);
  Field u1 = u0 + dt * v0 + (0.5 * dt * dt) * acc;
  project_field(u0, u1, c, dt);
  return SimState{grid, dt, 1, u0, std::move(u1)};
}

/// State from two given levels, the second projected along the first.
inline SimState start_from_levels(const Grid& grid, const Field& u0, Field u1,
                                  const Constraint& c, double dt) {
  check_on_grid(u0, grid);
  u0.check_same(u1);
  project_field(u0, u1, c, dt);
  return SimState{grid, dt, 1, u0, std::move(u1)};
}

struct RunSettings {
  std::size_t steps = 0;
  std::size_t snapshot_every = 0;     // 0: first and last only
  std::size_t diagnostics_every = 1;  // 0: none
};

struct RunSinks {
  std::function<void(const SimState&)> snapshot;
  std::function<void(const DiagnosticsRecord&)> diagnostics;
};

struct RunResult {
  SimState state;  // last valid state
  std::size_t steps_taken = 0;
  std::optional<StepFailure> failure;
};

/// Courant check: > 1 is rejected, above 1/sqrt(dim) a warning is printed.
inline void check_courant(const Grid& grid, double dt, std::ostream* warn = &std::cerr) {
  double h = grid.spacing(0);
  for (int a = 1; a < grid.dim(); ++a) h = std::min(h, grid.spacing(a));
  const double ratio = dt / h;
  if (ratio > 1.0 + 1e-12)
    throw ConfigError("Courant ratio " + std::to_string(ratio) + " exceeds 1");
  if (warn && ratio > 1.0 / std::sqrt(static_cast<double>(grid.dim())) + 1e-12)
    *warn << "warning: Courant ratio " << ratio << " above 1/sqrt(dim)\n";
}

/// Advances `initial` by `settings.steps` steps. Snapshots are emitted for the
/// initial state, every `snapshot_every` steps and for the final state;
/// diagnostics every `diagnostics_every` steps (and the final state). A failing
/// step stops the run; the last valid state is returned and emitted.
inline RunResult run(const SimState& initial, const Potential& pot, const Constraint& c,
                     const RunSettings& settings, const RunSinks& sinks = {}) {
  RunResult result{initial, 0, std::nullopt};
  auto emit_diag = [&](const SimState& s) {
    if (sinks.diagnostics) sinks.diagnostics(make_record(s, c, pot));
  };
  if (sinks.snapshot) sinks.snapshot(initial);
  if (settings.diagnostics_every > 0) emit_diag(initial);
  for (std::size_t k = 1; k <= settings.steps; ++k) {
    try {
      result.state = shake_step(result.state, pot, c);
    } catch (const StepFailure& f) {
      result.failure = f;
      break;
    }
    result.steps_taken = k;
    const bool last = k == settings.steps;
    if (sinks.snapshot && (last || (settings.snapshot_every > 0 &&
                                    k % settings.snapshot_every == 0)))
      sinks.snapshot(result.state);
    if (settings.diagnostics_every > 0 && (last || k % settings.diagnostics_every == 0))
      emit_diag(result.state);
  }
  if (result.failure && result.steps_taken > 0) {
    const bool emitted_snap = settings.snapshot_every > 0 &&
                              result.steps_taken % settings.snapshot_every == 0;
    if (sinks.snapshot && !emitted_snap) sinks.snapshot(result.state);
    const bool emitted_diag = settings.diagnostics_every > 0 &&
                              result.steps_taken % settings.diagnostics_every == 0;
    if (settings.diagnostics_every > 0 && !emitted_diag) emit_diag(result.state);
  }
  return result;
}

/// Exchanges the two stored levels, reversing the direction of time.
inline SimState reverse_levels(const SimState& s) {
  return SimState{s.grid, s.dt, s.step, s.curr, s.prev};
}

}  // namespace msconstrain
