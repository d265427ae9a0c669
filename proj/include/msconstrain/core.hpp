// Grids, bilinear forms, node-indexed fields and the finite-difference
// stencils shared by every scheme in msconstrain.
#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace msconstrain {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shape or size mismatch between arguments.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied parameters (grid, config, specs).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A numerical step could not be completed.
class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class Boundary { periodic, neumann };

inline const char* to_string(Boundary b) {
  return b == Boundary::periodic ? "periodic" : "neumann";
}

/// Uniform tensor grid in one or two space dimensions.
///
/// Periodic axes hold N nodes x_k = origin + k L/N; Neumann axes hold N nodes
/// including both end points, x_k = origin + k L/(N-1). Nodes are stored
/// row-major with axis 0 running fastest.
class Grid {
 public:
  Grid() = default;

  static Grid line(std::size_t n, double length = 1.0,
                   Boundary b = Boundary::periodic, double origin = 0.0) {
    return Grid(1, {n, 1}, {length, 1.0}, {b, Boundary::periodic},
                {origin, 0.0});
  }

  static Grid plane(std::size_t n1, std::size_t n2, double l1, double l2,
                    Boundary b1, Boundary b2, double o1 = 0.0,
                    double o2 = 0.0) {
    return Grid(2, {n1, n2}, {l1, l2}, {b1, b2}, {o1, o2});
  }

  Grid(int dim, std::array<std::size_t, 2> points, std::array<double, 2> length,
       std::array<Boundary, 2> boundary, std::array<double, 2> origin)
      : dim_(dim),
        points_(points),
        length_(length),
        boundary_(boundary),
        origin_(origin) {
    if (dim != 1 && dim != 2) throw ConfigError("grid dimension must be 1 or 2");
    if (dim == 1) points_[1] = 1;
    for (int a = 0; a < dim; ++a) {
      if (points_[a] == 0) throw ConfigError("grid axis has no points");
      if (!(length_[a] > 0.0)) throw ConfigError("grid length must be positive");
      if (boundary_[a] == Boundary::neumann && points_[a] < 3)
        throw ConfigError("Neumann axis needs at least 3 nodes");
      spacing_[a] = boundary_[a] == Boundary::periodic
                        ? length_[a] / static_cast<double>(points_[a])
                        : length_[a] / static_cast<double>(points_[a] - 1);
    }
  }

  int dim() const { return dim_; }
  std::size_t points(int axis) const { return points_[axis]; }
  double length(int axis) const { return length_[axis]; }
  double origin(int axis) const { return origin_[axis]; }
  Boundary boundary(int axis) const { return boundary_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  std::size_t size() const { return points_[0] * points_[1]; }

  bool all_periodic() const {
    for (int a = 0; a < dim_; ++a)
      if (boundary_[a] != Boundary::periodic) return false;
    return true;
  }

  /// Volume associated with one node in the rectangle rule.
  double cell_volume() const {
    double v = 1.0;
    for (int a = 0; a < dim_; ++a) v *= spacing_[a];
    return v;
  }

  /// Trapezoid weight of a node: halved at Neumann end points.
  double node_weight(std::size_t node) const {
    double w = cell_volume();
    for (int a = 0; a < dim_; ++a) {
      const std::size_t k = coord_index(node, a);
      if (boundary_[a] == Boundary::neumann && (k == 0 || k + 1 == points_[a]))
        w *= 0.5;
    }
    return w;
  }

  std::size_t index(std::size_t i, std::size_t j = 0) const {
    return i + points_[0] * j;
  }

  std::size_t coord_index(std::size_t node, int axis) const {
    return axis == 0 ? node % points_[0] : node / points_[0];
  }

  double coordinate(std::size_t node, int axis) const {
    return origin_[axis] +
           static_cast<double>(coord_index(node, axis)) * spacing_[axis];
  }

  /// Index of node `node` shifted by `offset` along `axis`. Periodic axes wrap;
  /// Neumann axes reflect about the end nodes (ghost u_{-1} = u_1,
  /// u_N = u_{N-2}). Offsets must satisfy |offset| < N on Neumann axes.
  std::size_t neighbor(std::size_t node, int axis, long offset) const {
    const long n = static_cast<long>(points_[axis]);
    long k = static_cast<long>(coord_index(node, axis)) + offset;
    if (boundary_[axis] == Boundary::periodic) {
      k %= n;
      if (k < 0) k += n;
    } else {
      if (k < 0) k = -k;
      if (k > n - 1) k = 2 * (n - 1) - k;
    }
    const auto kk = static_cast<std::size_t>(k);
    return axis == 0 ? kk + points_[0] * (node / points_[0])
                     : node % points_[0] + points_[0] * kk;
  }

  /// True when the forward difference at `node` along `axis` spans a real
  /// interval (always on periodic axes, not at the last Neumann node).
  bool has_forward_interval(std::size_t node, int axis) const {
    return boundary_[axis] == Boundary::periodic ||
           coord_index(node, axis) + 1 < points_[axis];
  }

  bool operator==(const Grid&) const = default;

 private:
  int dim_ = 1;
  std::array<std::size_t, 2> points_{1, 1};
  std::array<double, 2> length_{1.0, 1.0};
  std::array<Boundary, 2> boundary_{Boundary::periodic, Boundary::periodic};
  std::array<double, 2> origin_{0.0, 0.0};
  std::array<double, 2> spacing_{1.0, 1.0};
};

/// Diagonal bilinear form on the ambient space, sum_k sigma_k a_k b_k.
class BilinearForm {
 public:
  BilinearForm() = default;
  explicit BilinearForm(std::vector<int> signature)
      : signature_(std::move(signature)) {
    if (signature_.empty()) throw ConfigError("empty signature");
    for (int s : signature_)
      if (s != 1 && s != -1) throw ConfigError("signature entries must be +1 or -1");
  }

  static BilinearForm euclidean(std::size_t d) {
    return BilinearForm(std::vector<int>(d, 1));
  }
  /// (-,...,-,+): the hyperboloid model when d = 3.
  static BilinearForm minkowski(std::size_t d) {
    std::vector<int> s(d, -1);
    s.back() = 1;
    return BilinearForm(std::move(s));
  }

  std::size_t size() const { return signature_.size(); }
  std::span<const int> signature() const { return signature_; }
  bool is_euclidean() const {
    for (int s : signature_)
      if (s != 1) return false;
    return true;
  }

  double dot(std::span<const double> a, std::span<const double> b) const {
    if (a.size() != signature_.size() || b.size() != signature_.size())
      throw DimensionError("bilinear_dot: vector length does not match signature");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
      acc += signature_[k] * a[k] * b[k];
    return acc;
  }

  bool operator==(const BilinearForm&) const = default;

 private:
  std::vector<int> signature_{1, 1, 1};
};

inline double bilinear_dot(std::span<const double> a, std::span<const double> b,
                           const BilinearForm& form) {
  return form.dot(a, b);
}

/// Node-indexed values in R^width, stored node-major.
class Field {
 public:
  Field() = default;
  Field(std::size_t nodes, std::size_t width, double fill = 0.0)
      : nodes_(nodes), width_(width), data_(nodes * width, fill) {}

  std::size_t nodes() const { return nodes_; }
  std::size_t width() const { return width_; }

  std::span<double> operator[](std::size_t node) {
    return {data_.data() + node * width_, width_};
  }
  std::span<const double> operator[](std::size_t node) const {
    return {data_.data() + node * width_, width_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  Field& operator+=(const Field& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Field& operator-=(const Field& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Field& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }
  friend Field operator+(Field a, const Field& b) { return a += b; }
  friend Field operator-(Field a, const Field& b) { return a -= b; }
  friend Field operator*(double s, Field a) { return a *= s; }

  bool operator==(const Field&) const = default;

  void check_same(const Field& o) const {
    if (nodes_ != o.nodes_ || width_ != o.width_)
      throw DimensionError("field shape mismatch");
  }

 private:
  std::size_t nodes_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

inline void check_on_grid(const Field& f, const Grid& grid) {
  if (f.nodes() != grid.size())
    throw DimensionError("field has " + std::to_string(f.nodes()) +
                         " nodes, grid has " + std::to_string(grid.size()));
}

/// Sum over axes of the second central difference divided by spacing^2.
inline Field laplacian(const Field& f, const Grid& grid) {
  check_on_grid(f, grid);
  Field out(f.nodes(), f.width());
  const std::size_t w = f.width();
  for (int a = 0; a < grid.dim(); ++a) {
    const double inv_h2 = 1.0 / (grid.spacing(a) * grid.spacing(a));
    for (std::size_t n = 0; n < f.nodes(); ++n) {
      const auto up = f[grid.neighbor(n, a, 1)];
      const auto dn = f[grid.neighbor(n, a, -1)];
      const auto c = f[n];
      auto o = out[n];
      for (std::size_t k = 0; k < w; ++k)
        o[k] += (up[k] - 2.0 * c[k] + dn[k]) * inv_h2;
    }
  }
  return out;
}

/// Forward difference (f_{n+1} - f_n)/h along `axis`, ghost-aware.
inline Field forward_difference(const Field& f, const Grid& grid, int axis) {
  check_on_grid(f, grid);
  Field out(f.nodes(), f.width());
  const double inv_h = 1.0 / grid.spacing(axis);
  for (std::size_t n = 0; n < f.nodes(); ++n) {
    const auto up = f[grid.neighbor(n, axis, 1)];
    const auto c = f[n];
    auto o = out[n];
    for (std::size_t k = 0; k < f.width(); ++k) o[k] = (up[k] - c[k]) * inv_h;
  }
  return out;
}

/// Backward difference (f_n - f_{n-1})/h along `axis`, ghost-aware.
inline Field backward_difference(const Field& f, const Grid& grid, int axis) {
  check_on_grid(f, grid);
  Field out(f.nodes(), f.width());
  const double inv_h = 1.0 / grid.spacing(axis);
  for (std::size_t n = 0; n < f.nodes(); ++n) {
    const auto dn = f[grid.neighbor(n, axis, -1)];
    const auto c = f[n];
    auto o = out[n];
    for (std::size_t k = 0; k < f.width(); ++k) o[k] = (c[k] - dn[k]) * inv_h;
  }
  return out;
}

/// Two consecutive time levels of the reduced scheme.
struct SimState {
  Grid grid;
  double dt = 0.0;
  std::size_t step = 0;
  Field prev;  // level i-1
  Field curr;  // level i

  double time() const { return static_cast<double>(step) * dt; }
  double courant() const { return dt / grid.spacing(0); }
};

}  // namespace msconstrain
