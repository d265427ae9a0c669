// Holonomic constraints and the SHAKE-type projections onto them.
//
// Quadric targets {u : <u,u>_B = 1} (spheres, the hyperboloid) are projected in
// closed form along the previous position. The complex projective space CP^n,
// embedded as rank-one Hermitian projectors, is handled by a Newton iteration
// on the Hermitian multiplier matrix.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "msconstrain/core.hpp"

namespace msconstrain {

/// The predicted point cannot be brought back onto the constraint along the
/// prescribed direction (discriminant < 0). Raised at a node; the scheme
/// reports it as a blow-up symptom.
class ProjectionInfeasible : public NumericalError {
 public:
  explicit ProjectionInfeasible(const std::string& what, std::size_t node = 0,
                                double time = 0.0)
      : NumericalError(what), node_(node), time_(time) {}
  std::size_t node() const { return node_; }
  double time() const { return time_; }

 private:
  std::size_t node_;
  double time_;
};

class DegenerateDirection : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class CpProjectionFailed : public NumericalError {
 public:
  CpProjectionFailed(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const { return residual_; }

 private:
  double residual_;
};

// ---------------------------------------------------------------------------
// Quadrics

/// g(u) = <u,u>_B - 1. The constraint direction at u is u itself; the factor
/// two of the true gradient lives in the multiplier.
struct QuadricConstraint {
  BilinearForm form;

  double residual(std::span<const double> u) const {
    return form.dot(u, u) - 1.0;
  }
};

/// Multiplier lambda such that ut + lambda*u0 lies on the quadric.
///
/// With p = <ut,ut> - 1 and s = <u0,ut>, lambda solves
/// lambda^2 + 2 s lambda + p = 0. The root of smaller magnitude is returned,
/// evaluated as p / (-s - sign(s) sqrt(s^2 - p)) so that no cancellation
/// occurs when p is small.
inline double quadric_lambda(std::span<const double> u0, std::span<const double> ut,
                             const BilinearForm& form) {
  const double norm0 = form.dot(u0, u0);
  double scale = 0.0;
  for (double x : u0) scale += x * x;
  if (std::abs(norm0 - 1.0) > 1e-12 * std::max(1.0, scale))
    throw ConfigError("quadric_lambda: reference point is not on the quadric");
  const double p = form.dot(ut, ut) - 1.0;
  const double s = form.dot(u0, ut);
  double disc = s * s - p;
  // A tangent line gives disc = 0 up to rounding of s^2 and p.
  if (disc < 0.0 && -disc <= 8.0 * std::numeric_limits<double>::epsilon() * (s * s + std::abs(p)))
    disc = 0.0;
  if (disc < 0.0) throw ProjectionInfeasible("projection infeasible: s^2 - p < 0");
  const double root = std::sqrt(disc);
  const double denom = s >= 0.0 ? -s - root : -s + root;
  if (denom == 0.0) {
    if (p == 0.0) return 0.0;
    throw DegenerateDirection("quadric projection: degenerate direction");
  }
  return p / denom;
}

/// ut + lambda u0 with lambda from quadric_lambda.
inline std::vector<double> project_quadric(std::span<const double> u0,
                                           std::span<const double> ut,
                                           const BilinearForm& form) {
  const double lambda = quadric_lambda(u0, ut, form);
  std::vector<double> out(ut.begin(), ut.end());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += lambda * u0[k];
  return out;
}

// ---------------------------------------------------------------------------
// Complex projective space

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

enum class CpMode {
  directional,  // rho = rt + rho0 L + L rho0 - L, the gradient of <L, g> at rho0
  direct,       // rho = rt + L
  anchored,     // rho = rt + rho0 L + L rho0; cannot move the block orthogonal
                // to rho0, so corrections of size sqrt(error) are needed
};

inline const char* to_string(CpMode m) {
  switch (m) {
    case CpMode::directional: return "directional";
    case CpMode::direct: return "direct";
    case CpMode::anchored: return "anchored";
  }
  return "?";
}

inline CpMode cp_mode_from_string(const std::string& s) {
  if (s == "directional") return CpMode::directional;
  if (s == "direct") return CpMode::direct;
  if (s == "anchored") return CpMode::anchored;
  throw ConfigError("unknown CP projection mode '" + s + "'");
}

struct ProjectiveConstraint {
  int n = 1;
  CpMode mode = CpMode::directional;
  double tolerance = 1e-13;
  int max_iterations = 50;

  std::size_t matrix_size() const { return static_cast<std::size_t>(n + 1); }
  /// Length of the real vectorisation of an (n+1)x(n+1) complex matrix.
  std::size_t width() const { return 2 * matrix_size() * matrix_size(); }
};

/// Complex matrix stored as interleaved (re, im) pairs, row-major.
inline CMatrix matrix_from_real(std::span<const double> v, std::size_t m) {
  if (v.size() != 2 * m * m) throw DimensionError("matrix_from_real: size mismatch");
  CMatrix a(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      a(i, j) = {v[2 * (i * m + j)], v[2 * (i * m + j) + 1]};
  return a;
}

inline void matrix_to_real(const CMatrix& a, std::span<double> out) {
  const auto m = static_cast<std::size_t>(a.rows());
  if (out.size() != 2 * m * m) throw DimensionError("matrix_to_real: size mismatch");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      out[2 * (i * m + j)] = a(i, j).real();
      out[2 * (i * m + j) + 1] = a(i, j).imag();
    }
}

inline std::vector<double> matrix_to_real(const CMatrix& a) {
  std::vector<double> v(2 * static_cast<std::size_t>(a.size()));
  matrix_to_real(a, v);
  return v;
}

/// rho = Psi Psi^* / (Psi^* Psi).
inline CMatrix embed_cp(const CVector& psi) {
  const double norm2 = psi.squaredNorm();
  if (norm2 == 0.0) throw ConfigError("embed_cp: zero vector");
  return psi * psi.adjoint() / norm2;
}

inline double idempotency_residual(const CMatrix& rho) {
  return (rho * rho - rho).norm();
}

inline double trace_residual(const CMatrix& rho) {
  return std::abs(rho.trace() - std::complex<double>(1.0, 0.0));
}

namespace detail {

/// Real basis of the Hermitian matrices: E_ii, then E_ij + E_ji and
/// i(E_ij - E_ji) for i < j.
inline std::vector<CMatrix> hermitian_basis(std::size_t m) {
  std::vector<CMatrix> basis;
  basis.reserve(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    CMatrix e = CMatrix::Zero(m, m);
    e(i, i) = 1.0;
    basis.push_back(e);
  }
  const std::complex<double> I(0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      CMatrix s = CMatrix::Zero(m, m);
      s(i, j) = 1.0;
      s(j, i) = 1.0;
      basis.push_back(s);
      CMatrix a = CMatrix::Zero(m, m);
      a(i, j) = I;
      a(j, i) = -I;
      basis.push_back(a);
    }
  return basis;
}

/// Coordinates of a Hermitian matrix matching hermitian_basis ordering.
inline Eigen::VectorXd hermitian_coords(const CMatrix& h) {
  const auto m = static_cast<std::size_t>(h.rows());
  Eigen::VectorXd c(static_cast<Eigen::Index>(m * m));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m; ++i) c(k++) = h(i, i).real();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i + 1; j < m; ++j) {
      c(k++) = h(i, j).real();
      c(k++) = h(i, j).imag();
    }
  return c;
}

}  // namespace detail

struct CpProjection {
  CMatrix rho;
  CMatrix lambda;
  int iterations = 0;
  double residual = 0.0;
};

/// Projects the predicted Hermitian matrix `rt` onto CP^n.
///
/// Solves R(L) = rho(L)^2 - rho(L) = 0 for a Hermitian multiplier L by Newton's
/// method from L = 0, where rho(L) = rt + rho0 L + L rho0 - L (directional,
/// i.e. along the constraint gradient at rho0), rho(L) = rt + L (direct) or
/// rho(L) = rt + rho0 L + L rho0 (anchored). The Jacobian is rank deficient in
/// every mode, so each step takes the minimum-norm least-squares solution.
inline CpProjection project_cp(const CMatrix& rho0, const CMatrix& rt,
                               const ProjectiveConstraint& c) {
  const auto m = static_cast<std::size_t>(rt.rows());
  if (rt.cols() != rt.rows() || rho0.rows() != rt.rows() || rho0.cols() != rt.cols())
    throw DimensionError("project_cp: matrix size mismatch");
  if ((rt - rt.adjoint()).norm() > 1e-12 * std::max(1.0, rt.norm()))
    throw ConfigError("project_cp: predicted matrix is not Hermitian");
  if (std::abs(rt.trace() - std::complex<double>(1.0, 0.0)) > 1e-10)
    throw ConfigError("project_cp: trace of predicted matrix is not 1");

  const auto basis = detail::hermitian_basis(m);
  const auto nb = static_cast<Eigen::Index>(basis.size());
  auto apply = [&](const CMatrix& l) -> CMatrix {
    switch (c.mode) {
      case CpMode::directional: return CMatrix(rho0 * l + l * rho0 - l);
      case CpMode::anchored: return CMatrix(rho0 * l + l * rho0);
      case CpMode::direct: break;
    }
    return l;
  };

  CpProjection out;
  out.lambda = CMatrix::Zero(m, m);
  Eigen::MatrixXd jac(nb, nb);
  for (int it = 0;; ++it) {
    out.rho = rt + apply(out.lambda);
    out.rho = 0.5 * (out.rho + out.rho.adjoint());
    const CMatrix r = out.rho * out.rho - out.rho;
    out.residual = r.norm();
    out.iterations = it;
    if (out.residual <= c.tolerance) return out;
    if (it >= c.max_iterations)
      throw CpProjectionFailed("CP projection failed: residual " +
                                   std::to_string(out.residual) + " after " +
                                   std::to_string(it) + " iterations",
                               out.residual);
    for (Eigen::Index k = 0; k < nb; ++k) {
      const CMatrix d = apply(basis[static_cast<std::size_t>(k)]);
      jac.col(k) = detail::hermitian_coords(out.rho * d + d * out.rho - d);
    }
    const Eigen::VectorXd rhs = -detail::hermitian_coords(r);
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(jac);
    if (cod.rank() == 0)
      throw DegenerateDirection("CP projection: Newton system has rank zero");
    const Eigen::VectorXd step = cod.solve(rhs);
    if ((jac * step - rhs).norm() > 0.5 * rhs.norm())
      throw DegenerateDirection(
          "CP projection: Newton system inconsistent along the projection direction");
    CMatrix dl = CMatrix::Zero(m, m);
    for (Eigen::Index k = 0; k < nb; ++k)
      dl += step(k) * basis[static_cast<std::size_t>(k)];
    out.lambda += dl;
  }
}

// ---------------------------------------------------------------------------
// Uniform interface used by the schemes

using Constraint = std::variant<QuadricConstraint, ProjectiveConstraint>;

inline std::size_t ambient_width(const Constraint& c) {
  return std::visit(
      [](const auto& k) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(k)>, QuadricConstraint>)
          return k.form.size();
        else
          return k.width();
      },
      c);
}

/// Inner product used for energies: the quadric's form, or the Frobenius
/// pairing Tr(AB) which is the Euclidean product of the real vectorisation.
inline BilinearForm ambient_form(const Constraint& c) {
  if (const auto* q = std::get_if<QuadricConstraint>(&c)) return q->form;
  return BilinearForm::euclidean(ambient_width(c));
}

/// |g(u)| for quadrics, ||rho^2 - rho||_F for CP^n.
inline double constraint_residual(const Constraint& c, std::span<const double> u) {
  if (const auto* q = std::get_if<QuadricConstraint>(&c))
    return std::abs(q->residual(u));
  const auto& p = std::get<ProjectiveConstraint>(c);
  return idempotency_residual(matrix_from_real(u, p.matrix_size()));
}

/// Projects the predicted value `ut` (in place) using the reference point `u0`.
/// Returns the scalar multiplier (quadric) or the Frobenius norm of the
/// multiplier matrix (CP^n).
inline double project_node(const Constraint& c, std::span<const double> u0,
                           std::span<double> ut) {
  if (const auto* q = std::get_if<QuadricConstraint>(&c)) {
    const double lambda = quadric_lambda(u0, ut, q->form);
    for (std::size_t k = 0; k < ut.size(); ++k) ut[k] += lambda * u0[k];
    return lambda;
  }
  const auto& p = std::get<ProjectiveConstraint>(c);
  const auto m = p.matrix_size();
  const auto res = project_cp(matrix_from_real(u0, m), matrix_from_real(ut, m), p);
  matrix_to_real(res.rho, ut);
  return res.lambda.norm();
}

}  // namespace msconstrain
