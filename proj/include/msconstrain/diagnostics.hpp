// Discrete invariants and experiment-level detectors.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msconstrain/constraints.hpp"
#include "msconstrain/core.hpp"
#include "msconstrain/potential.hpp"

namespace msconstrain {

class DetectionError : public Error {
 public:
  using Error::Error;
};

struct DiagnosticsRecord {
  std::size_t step = 0;
  double time = 0.0;
  double energy = 0.0;
  std::array<double, 2> momentum{0.0, 0.0};
  double constraint_residual = 0.0;
  std::optional<double> trace_residual;
  std::optional<double> center_z;
};

namespace detail {

// Weight of the interval [x_n, x_n + h] along `axis`, trapezoid weights along
// the other axis. Zero for the ghost interval past a Neumann end node.
inline double interval_weight(const Grid& grid, std::size_t node, int axis) {
  if (!grid.has_forward_interval(node, axis)) return 0.0;
  double w = grid.cell_volume();
  for (int a = 0; a < grid.dim(); ++a) {
    if (a == axis) continue;
    const std::size_t k = grid.coord_index(node, a);
    if (grid.boundary(a) == Boundary::neumann &&
        (k == 0 || k + 1 == grid.points(a)))
      w *= 0.5;
  }
  return w;
}

inline void check_state(const SimState& s, const BilinearForm& form) {
  check_on_grid(s.curr, s.grid);
  s.curr.check_same(s.prev);
  if (s.curr.width() != form.size())
    throw DimensionError("state width does not match bilinear form");
  if (!(s.dt > 0.0)) throw DimensionError("state has no time step");
}

}  // namespace detail

/// Sum over nodes of 1/2 <dt^- u, dt^- u> + 1/2 sum_axes <dx^+ u, dx^+ u> + V(u),
/// weighted by the cell volume. The gradient term uses the same form as the
/// constraint, so hyperboloid targets give negative energies.
inline double discrete_hamiltonian(const SimState& s, const BilinearForm& form,
                                   const Potential& pot) {
  detail::check_state(s, form);
  const Grid& g = s.grid;
  const std::size_t w = form.size();
  std::vector<double> diff(w);
  double kinetic = 0.0, gradient = 0.0, potential = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto u = s.curr[n];
    const auto up = s.prev[n];
    for (std::size_t k = 0; k < w; ++k) diff[k] = (u[k] - up[k]) / s.dt;
    const double wn = g.node_weight(n);
    kinetic += 0.5 * form.dot(diff, diff) * wn;
    if (!pot.is_zero()) potential += pot.value(u) * wn;
    for (int a = 0; a < g.dim(); ++a) {
      const double wa = detail::interval_weight(g, n, a);
      if (wa == 0.0) continue;
      const auto un = s.curr[g.neighbor(n, a, 1)];
      const double inv_h = 1.0 / g.spacing(a);
      for (std::size_t k = 0; k < w; ++k) diff[k] = (un[k] - u[k]) * inv_h;
      gradient += 0.5 * form.dot(diff, diff) * wa;
    }
  }
  return kinetic + gradient + potential;
}

/// Per axis a: sum over nodes of 1/2 <dx_a^+ u, dt^- u> times the cell volume.
inline std::array<double, 2> discrete_momentum(const SimState& s,
                                               const BilinearForm& form) {
  detail::check_state(s, form);
  const Grid& g = s.grid;
  const std::size_t w = form.size();
  std::vector<double> ux(w), ut(w);
  std::array<double, 2> p{0.0, 0.0};
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto u = s.curr[n];
    const auto up = s.prev[n];
    for (std::size_t k = 0; k < w; ++k) ut[k] = (u[k] - up[k]) / s.dt;
    for (int a = 0; a < g.dim(); ++a) {
      const double wa = detail::interval_weight(g, n, a);
      if (wa == 0.0) continue;
      const auto un = s.curr[g.neighbor(n, a, 1)];
      for (std::size_t k = 0; k < w; ++k) ux[k] = (un[k] - u[k]) / g.spacing(a);
      p[static_cast<std::size_t>(a)] += 0.5 * form.dot(ux, ut) * wa;
    }
  }
  return p;
}

inline double max_constraint_residual(const Field& u, const Constraint& c) {
  double worst = 0.0;
  for (std::size_t n = 0; n < u.nodes(); ++n)
    worst = std::max(worst, constraint_residual(c, u[n]));
  return worst;
}

inline double max_trace_residual(const Field& u, const ProjectiveConstraint& c) {
  double worst = 0.0;
  for (std::size_t n = 0; n < u.nodes(); ++n)
    worst = std::max(worst, trace_residual(matrix_from_real(u[n], c.matrix_size())));
  return worst;
}

/// Node closest to the middle of the domain.
inline std::size_t center_node(const Grid& g) {
  return g.dim() == 1 ? g.index(g.points(0) / 2)
                      : g.index(g.points(0) / 2, g.points(1) / 2);
}

/// Full diagnostics for the current level of `s`.
inline DiagnosticsRecord make_record(const SimState& s, const Constraint& c,
                                     const Potential& pot) {
  const BilinearForm form = ambient_form(c);
  DiagnosticsRecord r;
  r.step = s.step;
  r.time = s.time();
  r.energy = discrete_hamiltonian(s, form, pot);
  r.momentum = discrete_momentum(s, form);
  r.constraint_residual = max_constraint_residual(s.curr, c);
  if (const auto* p = std::get_if<ProjectiveConstraint>(&c))
    r.trace_residual = max_trace_residual(s.curr, *p);
  if (std::holds_alternative<QuadricConstraint>(c) && s.curr.width() == 3 &&
      s.grid.dim() == 2)
    r.center_z = s.curr[center_node(s.grid)][2];
  return r;
}

/// Least-squares slope of (value - value_0)/|value_0| against time.
inline double drift_slope(std::span<const std::pair<double, double>> series) {
  if (series.size() < 10) throw DetectionError("drift_slope: need at least 10 samples");
  const double v0 = series.front().second;
  if (v0 == 0.0 || !std::isfinite(v0))
    throw DetectionError("drift_slope: degenerate reference value");
  double mt = 0.0, mr = 0.0;
  for (const auto& [t, v] : series) {
    mt += t;
    mr += (v - v0) / std::abs(v0);
  }
  mt /= static_cast<double>(series.size());
  mr /= static_cast<double>(series.size());
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [t, v] : series) {
    const double r = (v - v0) / std::abs(v0);
    sxx += (t - mt) * (t - mt);
    sxy += (t - mt) * (r - mr);
  }
  if (sxx == 0.0) throw DetectionError("drift_slope: all samples at one time");
  return sxy / sxx;
}

/// Normalised L2 distance ||u - ref|| / ||ref|| over all nodes and components.
inline double relative_distance(const Field& u, const Field& ref) {
  u.check_same(ref);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < u.data().size(); ++k) {
    const double d = u.data()[k] - ref.data()[k];
    num += d * d;
    den += ref.data()[k] * ref.data()[k];
  }
  return den == 0.0 ? std::sqrt(num) : std::sqrt(num / den);
}

/// First return time of a trajectory to its initial state.
///
/// The distance to `u_init` must first exceed ten times its first nonzero
/// value; the period is the time of the next local minimum.
inline double period_detect(std::span<const double> times,
                            std::span<const Field> snapshots, const Field& u_init) {
  if (times.size() != snapshots.size())
    throw DimensionError("period_detect: times and snapshots differ in length");
  std::vector<double> dist(snapshots.size());
  for (std::size_t k = 0; k < snapshots.size(); ++k)
    dist[k] = relative_distance(snapshots[k], u_init);
  std::size_t k = 0;
  while (k < dist.size() && dist[k] == 0.0) ++k;
  if (k == dist.size()) throw DetectionError("no period detected: series never moves");
  const double threshold = 10.0 * dist[k];
  while (k < dist.size() && dist[k] <= threshold) ++k;
  for (++k; k + 1 < dist.size(); ++k)
    if (dist[k] < dist[k - 1] && dist[k] <= dist[k + 1]) return times[k];
  throw DetectionError("no period detected");
}

struct BlowupTimes {
  std::optional<double> energy_max;
  std::optional<double> center_flip;
};

/// Blow-up time estimates: time of the interior energy maximum and first
/// downward zero crossing of the centre node's third coordinate. A channel
/// without a detection is left empty; DetectionError when both are empty.
inline BlowupTimes blowup_detect(std::span<const DiagnosticsRecord> records) {
  BlowupTimes out;
  if (records.size() >= 3) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < records.size(); ++k)
      if (records[k].energy > records[best].energy) best = k;
    if (best != 0 && best + 1 != records.size()) out.energy_max = records[best].time;
  }
  for (std::size_t k = 1; k < records.size(); ++k) {
    const auto& a = records[k - 1].center_z;
    const auto& b = records[k].center_z;
    if (a && b && *a > 0.0 && *b <= 0.0) {
      out.center_flip = records[k].time;
      break;
    }
  }
  if (!out.energy_max && !out.center_flip) throw DetectionError("no blow-up detected");
  return out;
}

}  // namespace msconstrain
