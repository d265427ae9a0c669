// Smooth potentials V(u) acting on the ambient coordinates.
#pragma once

#include <functional>
#include <span>
#include <string>

#include "msconstrain/core.hpp"

namespace msconstrain {

struct Potential {
  std::string id = "zero";
  std::function<double(std::span<const double>)> value;
  /// grad += V'(u)
  std::function<void(std::span<const double>, std::span<double>)> add_gradient;
  /// out += V''(u) du
  std::function<void(std::span<const double>, std::span<const double>, std::span<double>)>
      add_hessian_apply;

  bool is_zero() const { return id == "zero"; }
};

inline Potential zero_potential() {
  Potential p;
  p.id = "zero";
  p.value = [](std::span<const double>) { return 0.0; };
  p.add_gradient = [](std::span<const double>, std::span<double>) {};
  p.add_hessian_apply = [](std::span<const double>, std::span<const double>,
                           std::span<double>) {};
  return p;
}

/// V(u) = c (u_1^2 + u_2^2); c = 400 gives the axis potential pulling
/// particles toward the poles.
inline Potential axis_potential(double strength = 400.0) {
  Potential p;
  p.id = "axis";
  p.value = [strength](std::span<const double> u) {
    return strength * (u[0] * u[0] + u[1] * u[1]);
  };
  p.add_gradient = [strength](std::span<const double> u, std::span<double> g) {
    g[0] += 2.0 * strength * u[0];
    g[1] += 2.0 * strength * u[1];
  };
  p.add_hessian_apply = [strength](std::span<const double>, std::span<const double> du,
                                   std::span<double> out) {
    out[0] += 2.0 * strength * du[0];
    out[1] += 2.0 * strength * du[1];
  };
  return p;
}

inline Potential potential_by_id(const std::string& id) {
  if (id == "zero") return zero_potential();
  if (id == "axis") return axis_potential();
  throw ConfigError("unknown potential '" + id + "'");
}

/// Nodewise V'(u).
inline Field potential_gradient(const Field& u, const Potential& pot) {
  Field g(u.nodes(), u.width());
  if (pot.is_zero()) return g;
  for (std::size_t n = 0; n < u.nodes(); ++n) pot.add_gradient(u[n], g[n]);
  return g;
}

}  // namespace msconstrain
