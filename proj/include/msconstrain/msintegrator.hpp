// Constrained Euler box scheme on the full multi-symplectic state
// z = (u, v, m) in one space dimension and z = (u, v, p1, p2) in two.
//
//   M+ dt^+ z + M- dt^- z + sum_a (K_a+ dx_a^+ z + K_a- dx_a^- z)
//       = grad S(z) - lambda grad g(z),      g(z^{i+1}) = 0,
//
// with the wave-map blocks M, K_a and S(z) = v.v/2 - sum_a p_a.p_a/2 + V(u).
// The first-order system collapses to explicit recurrences which are what
// euler_box_step evaluates; scheme_residual re-checks them against the matrix
// form. Tangent propagation and the discrete multi-symplectic conservation law
// live here too. Only periodic grids are supported.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msconstrain/constraints.hpp"
#include "msconstrain/core.hpp"
#include "msconstrain/potential.hpp"

namespace msconstrain {

struct MSStructure {
  int space_dim = 1;
  std::size_t target_dim = 3;
  Potential potential = zero_potential();
  QuadricConstraint constraint{BilinearForm::euclidean(3)};

  Eigen::MatrixXd M, M_plus, M_minus;
  std::vector<Eigen::MatrixXd> K, K_plus, K_minus;

  std::size_t z_size() const { return (2 + static_cast<std::size_t>(space_dim)) * target_dim; }
  std::size_t u_offset() const { return 0; }
  std::size_t v_offset() const { return target_dim; }
  std::size_t p_offset(int axis) const {
    return (2 + static_cast<std::size_t>(axis)) * target_dim;
  }

  double S(std::span<const double> z) const {
    const std::size_t d = target_dim;
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) s += 0.5 * z[v_offset() + k] * z[v_offset() + k];
    for (int a = 0; a < space_dim; ++a)
      for (std::size_t k = 0; k < d; ++k)
        s -= 0.5 * z[p_offset(a) + k] * z[p_offset(a) + k];
    if (!potential.is_zero()) s += potential.value(z.subspan(0, d));
    return s;
  }

  Eigen::VectorXd grad_S(std::span<const double> z) const {
    const std::size_t d = target_dim;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(z_size()));
    if (!potential.is_zero())
      potential.add_gradient(z.subspan(0, d), std::span<double>(g.data(), d));
    for (std::size_t k = 0; k < d; ++k) g(v_offset() + k) = z[v_offset() + k];
    for (int a = 0; a < space_dim; ++a)
      for (std::size_t k = 0; k < d; ++k) g(p_offset(a) + k) = -z[p_offset(a) + k];
    return g;
  }
};

/// Block matrices of the wave-map system with the classical splitting
/// M+ = [[0,-I,0..],0..], K_a+ = -I in the (u, p_a) block.
inline MSStructure wave_map_structure(int space_dim, std::size_t target_dim,
                                      Potential pot = zero_potential(),
                                      BilinearForm form = BilinearForm()) {
  if (space_dim != 1 && space_dim != 2) throw ConfigError("space dimension must be 1 or 2");
  if (form.size() != target_dim) form = BilinearForm::euclidean(target_dim);
  MSStructure ms;
  ms.space_dim = space_dim;
  ms.target_dim = target_dim;
  ms.potential = std::move(pot);
  ms.constraint = QuadricConstraint{form};
  const auto n = static_cast<Eigen::Index>(ms.z_size());
  const auto d = static_cast<Eigen::Index>(target_dim);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(d, d);
  ms.M_plus = Eigen::MatrixXd::Zero(n, n);
  ms.M_plus.block(0, d, d, d) = -I;
  ms.M_minus = -ms.M_plus.transpose();
  ms.M = ms.M_plus + ms.M_minus;
  for (int a = 0; a < space_dim; ++a) {
    const auto off = static_cast<Eigen::Index>(ms.p_offset(a));
    Eigen::MatrixXd kp = Eigen::MatrixXd::Zero(n, n);
    kp.block(0, off, d, d) = -I;
    ms.K_plus.push_back(kp);
    ms.K_minus.push_back(-kp.transpose());
    ms.K.push_back(kp - kp.transpose());
  }
  return ms;
}

/// One time level of the full state plus the level before it.
struct FullState {
  Grid grid;
  double dt = 0.0;
  std::size_t step = 0;
  Field z;                     // level i, width z_size
  std::vector<double> lambda;  // multiplier that produced level i

  double time() const { return static_cast<double>(step) * dt; }
};

namespace detail {

inline void require_periodic(const Grid& g) {
  if (!g.all_periodic())
    throw ConfigError("the full Euler box integrator supports periodic grids only");
}

inline Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> s) {
  return {s.data(), static_cast<Eigen::Index>(s.size())};
}

/// p_a = -dx_a^- u for every axis, written into z.
inline void refresh_momenta(Field& z, const Grid& g, const MSStructure& ms) {
  const std::size_t d = ms.target_dim;
  for (int a = 0; a < g.dim(); ++a) {
    const double inv_h = 1.0 / g.spacing(a);
    for (std::size_t n = 0; n < g.size(); ++n) {
      const auto zc = z[n];
      const auto zl = z[g.neighbor(n, a, -1)];
      std::vector<double> p(d);
      for (std::size_t k = 0; k < d; ++k) p[k] = -(zc[k] - zl[k]) * inv_h;
      auto dst = z[n];
      for (std::size_t k = 0; k < d; ++k) dst[ms.p_offset(a) + k] = p[k];
    }
  }
}

}  // namespace detail

/// Full state from the two levels of the reduced scheme:
/// v = dt^- u, p_a = -dx_a^- u.
inline FullState full_state_from(const SimState& s, const MSStructure& ms) {
  detail::require_periodic(s.grid);
  if (s.curr.width() != ms.target_dim) throw DimensionError("target dimension mismatch");
  if (s.grid.dim() != ms.space_dim) throw DimensionError("space dimension mismatch");
  FullState f{s.grid, s.dt, s.step, Field(s.grid.size(), ms.z_size()), {}};
  for (std::size_t n = 0; n < s.grid.size(); ++n) {
    auto z = f.z[n];
    for (std::size_t k = 0; k < ms.target_dim; ++k) {
      z[k] = s.curr[n][k];
      z[ms.v_offset() + k] = (s.curr[n][k] - s.prev[n][k]) / s.dt;
    }
  }
  detail::refresh_momenta(f.z, s.grid, ms);
  f.lambda.assign(s.grid.size(), 0.0);
  return f;
}

/// u at level i.
inline Field positions(const FullState& f, const MSStructure& ms) {
  Field u(f.grid.size(), ms.target_dim);
  for (std::size_t n = 0; n < u.nodes(); ++n)
    for (std::size_t k = 0; k < ms.target_dim; ++k) u[n][k] = f.z[n][k];
  return u;
}

/// u at level i-1, recovered as u^i - dt v^i.
inline Field previous_positions(const FullState& f, const MSStructure& ms) {
  Field u(f.grid.size(), ms.target_dim);
  for (std::size_t n = 0; n < u.nodes(); ++n)
    for (std::size_t k = 0; k < ms.target_dim; ++k)
      u[n][k] = f.z[n][k] - f.dt * f.z[n][ms.v_offset() + k];
  return u;
}

/// One constrained Euler box step:
///   p_a^i = -dx_a^- u^i,
///   v^{i+1} = v^i - dt (sum_a dx_a^+ p_a^i + V'(u^i) - lambda u^i),
///   u^{i+1} = u^i + dt v^{i+1},
/// with lambda per node such that g(u^{i+1}) = 0.
inline FullState euler_box_step(const FullState& s, const MSStructure& ms) {
  detail::require_periodic(s.grid);
  const Grid& g = s.grid;
  const std::size_t d = ms.target_dim;
  const double dt = s.dt;
  FullState out{g, dt, s.step + 1, s.z, std::vector<double>(g.size(), 0.0)};
  std::vector<double> force(d), u_free(d);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto z = s.z[n];
    std::fill(force.begin(), force.end(), 0.0);
    for (int a = 0; a < g.dim(); ++a) {
      const auto zr = s.z[g.neighbor(n, a, 1)];
      const double inv_h = 1.0 / g.spacing(a);
      for (std::size_t k = 0; k < d; ++k)
        force[k] += (zr[ms.p_offset(a) + k] - z[ms.p_offset(a) + k]) * inv_h;
    }
    if (!ms.potential.is_zero()) ms.potential.add_gradient(z.subspan(0, d), force);
    // Unconstrained update, then the multiplier along u^i.
    for (std::size_t k = 0; k < d; ++k)
      u_free[k] = z[k] + dt * (z[ms.v_offset() + k] - dt * force[k]);
    double lambda = 0.0;
    try {
      lambda = quadric_lambda(z.subspan(0, d), u_free, ms.constraint.form) / (dt * dt);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " at node " + std::to_string(n));
    }
    auto zn = out.z[n];
    for (std::size_t k = 0; k < d; ++k) {
      const double v_new = z[ms.v_offset() + k] - dt * (force[k] - lambda * z[k]);
      zn[ms.v_offset() + k] = v_new;
      zn[k] = z[k] + dt * v_new;
    }
    out.lambda[n] = lambda;
  }
  detail::refresh_momenta(out.z, g, ms);
  return out;
}

/// Max-norm residual of the matrix form of the scheme at level i, given the
/// full states at levels i and i+1 (level i-1 positions are recovered from
/// v^i). Zero up to rounding for states produced by euler_box_step.
inline double scheme_residual(const FullState& level_i, const FullState& level_next,
                              const MSStructure& ms) {
  if (level_next.step != level_i.step + 1) throw DimensionError("level misalignment");
  const Grid& g = level_i.grid;
  const std::size_t d = ms.target_dim;
  const Field u_prev = previous_positions(level_i, ms);
  double worst = 0.0;
  Eigen::VectorXd z_prev(static_cast<Eigen::Index>(ms.z_size()));
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto zi = detail::as_vec(level_i.z[n]);
    const auto zn = detail::as_vec(level_next.z[n]);
    // Only the u-block of z^{i-1} enters M- dt^- z.
    z_prev = zi;
    for (std::size_t k = 0; k < d; ++k) z_prev(static_cast<Eigen::Index>(k)) = u_prev[n][k];
    Eigen::VectorXd lhs = ms.M_plus * (zn - zi) / level_i.dt +
                          ms.M_minus * (zi - z_prev) / level_i.dt;
    for (int a = 0; a < g.dim(); ++a) {
      const auto zr = detail::as_vec(level_i.z[g.neighbor(n, a, 1)]);
      const auto zl = detail::as_vec(level_i.z[g.neighbor(n, a, -1)]);
      const double h = g.spacing(a);
      const auto au = static_cast<std::size_t>(a);
      lhs += ms.K_plus[au] * (zr - zi) / h + ms.K_minus[au] * (zi - zl) / h;
    }
    Eigen::VectorXd rhs = ms.grad_S(level_i.z[n]);
    for (std::size_t k = 0; k < d; ++k)
      rhs(static_cast<Eigen::Index>(k)) -= level_next.lambda[n] * zi(static_cast<Eigen::Index>(k));
    worst = std::max(worst, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Tangents

/// Tangent vectors dz at two consecutive levels along a base trajectory.
struct TangentField {
  std::size_t step = 0;  // level index of `curr`
  Field prev;
  Field curr;
  std::vector<double> dlambda;  // multiplier variation that produced `curr`
};

enum class TangentMode {
  constrained,  // linearised scheme: dlambda from the linearised constraint
  orthogonal,   // constraint force dropped; feasibility restored by projecting
                // du^{i+1} orthogonally onto the tangent space at u^{i+1}
};

/// Tangent at the initial level pair from position variations du^{i-1}, du^i.
inline TangentField make_tangent(const FullState& base, const Field& du_prev,
                                 const Field& du_curr, const MSStructure& ms) {
  const Grid& g = base.grid;
  const std::size_t d = ms.target_dim;
  TangentField t{base.step, Field(g.size(), ms.z_size()), Field(g.size(), ms.z_size()),
                 std::vector<double>(g.size(), 0.0)};
  for (std::size_t n = 0; n < g.size(); ++n)
    for (std::size_t k = 0; k < d; ++k) {
      t.curr[n][k] = du_curr[n][k];
      t.curr[n][ms.v_offset() + k] = (du_curr[n][k] - du_prev[n][k]) / base.dt;
      t.prev[n][k] = du_prev[n][k];
    }
  detail::refresh_momenta(t.curr, g, ms);
  detail::refresh_momenta(t.prev, g, ms);
  return t;
}

/// Largest |<u^i, du^i>| over nodes.
inline double linearized_constraint_violation(const FullState& base, const Field& dz,
                                              const MSStructure& ms) {
  double worst = 0.0;
  const std::size_t d = ms.target_dim;
  for (std::size_t n = 0; n < base.grid.size(); ++n)
    worst = std::max(worst, std::abs(ms.constraint.form.dot(base.z[n].subspan(0, d),
                                                            dz[n].subspan(0, d))));
  return worst;
}

/// Propagates a tangent from level i to i+1 alongside the base step
/// `before` -> `after` (after = euler_box_step(before)).
inline TangentField tangent_step(const FullState& before, const FullState& after,
                                 const TangentField& t, const MSStructure& ms,
                                 TangentMode mode = TangentMode::constrained) {
  if (after.step != before.step + 1 || t.step != before.step)
    throw DimensionError("tangent_step: level misalignment");
  const Grid& g = before.grid;
  const std::size_t d = ms.target_dim;
  const double dt = before.dt;
  const BilinearForm& form = ms.constraint.form;
  if (mode == TangentMode::constrained &&
      linearized_constraint_violation(before, t.curr, ms) > 1e-11)
    throw ConfigError("tangent violates the linearised constraint");

  TangentField out{t.step + 1, t.curr, t.curr, std::vector<double>(g.size(), 0.0)};
  std::vector<double> force(d), du_free(d);
  for (std::size_t n = 0; n < g.size(); ++n) {
    const auto z = before.z[n];
    const auto dz = t.curr[n];
    const auto u = z.subspan(0, d);
    const auto u_next = after.z[n].subspan(0, d);
    const double lambda = after.lambda[n];
    std::fill(force.begin(), force.end(), 0.0);
    for (int a = 0; a < g.dim(); ++a) {
      const auto dzr = t.curr[g.neighbor(n, a, 1)];
      const double inv_h = 1.0 / g.spacing(a);
      for (std::size_t k = 0; k < d; ++k)
        force[k] += (dzr[ms.p_offset(a) + k] - dz[ms.p_offset(a) + k]) * inv_h;
    }
    if (!ms.potential.is_zero()) ms.potential.add_hessian_apply(u, dz.subspan(0, d), force);
    for (std::size_t k = 0; k < d; ++k) force[k] -= lambda * dz[k];
    for (std::size_t k = 0; k < d; ++k)
      du_free[k] = dz[k] + dt * (dz[ms.v_offset() + k] - dt * force[k]);

    double dlambda = 0.0;
    auto dzn = out.curr[n];
    if (mode == TangentMode::constrained) {
      const double denom = form.dot(u_next, u);
      if (std::abs(denom) < 1e-14)
        throw DegenerateDirection("tangent_step: singular linearised constraint");
      dlambda = -form.dot(u_next, du_free) / (dt * dt * denom);
      for (std::size_t k = 0; k < d; ++k) {
        const double dv = dz[ms.v_offset() + k] - dt * (force[k] - dlambda * u[k]);
        dzn[ms.v_offset() + k] = dv;
        dzn[k] = dz[k] + dt * dv;
      }
    } else {
      const double nn = form.dot(u_next, u_next);
      const double c = form.dot(u_next, du_free) / nn;
      for (std::size_t k = 0; k < d; ++k) {
        dzn[k] = du_free[k] - c * u_next[k];
        dzn[ms.v_offset() + k] = (dzn[k] - dz[k]) / dt;
      }
    }
    out.dlambda[n] = dlambda;
  }
  detail::refresh_momenta(out.curr, g, ms);
  return out;
}

namespace detail {

// <a, P b> - <b, P a>
inline double two_form(const Eigen::MatrixXd& P, std::span<const double> a_first,
                       std::span<const double> b_second, std::span<const double> b_first,
                       std::span<const double> a_second) {
  return as_vec(a_first).dot(P * as_vec(b_second)) - as_vec(b_first).dot(P * as_vec(a_second));
}

}  // namespace detail

/// Residual of the discrete multi-symplectic conservation law per node (cell)
/// at level i:
///   dt^+ omega(dz^{i-1}, dz^i) + sum_a dx_a^+ kappa_a(dz^{n-1}, dz^n),
/// with omega(xi, eta) = <xi_a, M+ eta_b> - <xi_b, M+ eta_a> and kappa_a the same
/// with K_a+. `*_before` hold levels (i-1, i), `*_after` levels (i, i+1).
inline std::vector<double> discrete_ms_residual(const TangentField& a_before,
                                                const TangentField& a_after,
                                                const TangentField& b_before,
                                                const TangentField& b_after,
                                                const Grid& grid, double dt,
                                                const MSStructure& ms) {
  if (a_after.step != a_before.step + 1 || b_after.step != b_before.step + 1 ||
      a_before.step != b_before.step || a_before.curr != a_after.prev ||
      b_before.curr != b_after.prev)
    throw DimensionError("discrete_ms_residual: level misalignment");
  std::vector<double> res(grid.size(), 0.0);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const double w_now =
        detail::two_form(ms.M_plus, a_before.prev[n], b_before.curr[n], b_before.prev[n],
                         a_before.curr[n]);
    const double w_next =
        detail::two_form(ms.M_plus, a_after.prev[n], b_after.curr[n], b_after.prev[n],
                         a_after.curr[n]);
    double r = (w_next - w_now) / dt;
    for (int a = 0; a < grid.dim(); ++a) {
      const auto& Kp = ms.K_plus[static_cast<std::size_t>(a)];
      const std::size_t l = grid.neighbor(n, a, -1);
      const std::size_t rr = grid.neighbor(n, a, 1);
      const auto& A = a_before.curr;
      const auto& B = b_before.curr;
      const double k_here = detail::two_form(Kp, A[l], B[n], B[l], A[n]);
      const double k_right = detail::two_form(Kp, A[n], B[rr], B[n], A[rr]);
      r += (k_right - k_here) / grid.spacing(a);
    }
    res[n] = r;
  }
  return res;
}

enum class DensityLaw { energy, momentum };

/// Per-node residual of the local energy law E_t + sum_a F_a,x_a = 0 or (1D)
/// momentum law I_t + J_x = 0, with
///   E = S + sum_a <dx_a^+ z, K_a+ z>,  F_a = -<dt^- z, K_a+ z>,
///   I = -<dx^+ z, M+ z>,               J = S + <dt^- z, M+ z>,
/// evaluated on the full states at levels i and i+1.
inline std::vector<double> density_conservation_residual(const FullState& level_i,
                                                         const FullState& level_next,
                                                         const MSStructure& ms,
                                                         DensityLaw which) {
  if (level_next.step != level_i.step + 1) throw DimensionError("insufficient history");
  const Grid& g = level_i.grid;
  if (which == DensityLaw::momentum && g.dim() != 1)
    throw ConfigError("momentum density law implemented in one space dimension");
  const double dt = level_i.dt;
  const std::size_t d = ms.target_dim;
  const Field u_prev_i = previous_positions(level_i, ms);

  // z_t by dt^-: only the u-block of the earlier level is needed because
  // K_a+ z and M+ z live in the u-block.
  auto z_t = [&](const FullState& f, const Field& u_prev, std::size_t n) {
    Eigen::VectorXd zt = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ms.z_size()));
    for (std::size_t k = 0; k < d; ++k)
      zt(static_cast<Eigen::Index>(k)) = (f.z[n][k] - u_prev[n][k]) / dt;
    return zt;
  };
  auto z_x = [&](const FullState& f, std::size_t n, int a) {
    return Eigen::VectorXd((detail::as_vec(f.z[g.neighbor(n, a, 1)]) -
                            detail::as_vec(f.z[n])) /
                           g.spacing(a));
  };
  auto density = [&](const FullState& f, std::size_t n) {
    const auto z = detail::as_vec(f.z[n]);
    if (which == DensityLaw::energy) {
      double e = ms.S(f.z[n]);
      for (int a = 0; a < g.dim(); ++a)
        e += z_x(f, n, a).dot(ms.K_plus[static_cast<std::size_t>(a)] * z);
      return e;
    }
    return -z_x(f, n, 0).dot(ms.M_plus * z);
  };
  auto flux = [&](const FullState& f, const Field& u_prev, std::size_t n, int a) {
    const auto z = detail::as_vec(f.z[n]);
    if (which == DensityLaw::energy)
      return -z_t(f, u_prev, n).dot(ms.K_plus[static_cast<std::size_t>(a)] * z);
    return ms.S(f.z[n]) + z_t(f, u_prev, n).dot(ms.M_plus * z);
  };

  std::vector<double> res(g.size(), 0.0);
  for (std::size_t n = 0; n < g.size(); ++n) {
    double r = (density(level_next, n) - density(level_i, n)) / dt;
    for (int a = 0; a < g.dim(); ++a)
      r += (flux(level_i, u_prev_i, g.neighbor(n, a, 1), a) - flux(level_i, u_prev_i, n, a)) /
           g.spacing(a);
    res[n] = r;
  }
  return res;
}

}  // namespace msconstrain
