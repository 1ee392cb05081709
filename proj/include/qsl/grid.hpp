#pragma once

// Uniform finite-volume grids for the line and for radially symmetric
// functions on R^N.
//
// Both kinds share one discrete calculus: node values f_i, edge differences
// (f_{i+1} - f_i)/h, node weights w_i and edge weights a_{i+1/2} such that
//
//   sum_e a_e |Df_e|^2  ~  int |grad f|^2,      sum_i w_i f_i  ~  int f.
//
// The discrete Laplacian is the operator that is self-adjoint for this pair,
// so quadratic invariants of the flows built on top of it hold exactly.

#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qsl/error.hpp"

namespace qsl {

enum class GridKind { line, radial };

inline std::string to_string(GridKind kind) { return kind == GridKind::line ? "line" : "radial"; }

inline GridKind grid_kind_from_string(const std::string& s) {
  if (s == "line") return GridKind::line;
  if (s == "radial") return GridKind::radial;
  throw PreconditionError("unknown grid kind '" + s + "'");
}

/// Surface area of the unit sphere S^{N-1}: 2 pi^{N/2} / Gamma(N/2).
inline double sphere_area(int dim) {
  return 2.0 * std::pow(std::numbers::pi, 0.5 * dim) / std::tgamma(0.5 * dim);
}

class Grid;
using GridPtr = std::shared_ptr<const Grid>;

/// Immutable discretisation of R (line) or of the radial half line of R^N.
///
/// line:   2M+1 nodes x_i = -R + i h, the two end nodes carry the homogeneous
///         Dirichlet condition and are never updated.
/// radial: M nodes r_i = i h, i = 0..M-1, with a ghost zero at r = R = M h.
///         N = 1 is allowed and represents even functions on the line.
class Grid {
 public:
  static constexpr int min_points = 16;

  static GridPtr line(double h, double extent) {
    return std::shared_ptr<const Grid>(new Grid(GridKind::line, 1, h, extent));
  }

  static GridPtr radial(int dim, double h, double extent) {
    return std::shared_ptr<const Grid>(new Grid(GridKind::radial, dim, h, extent));
  }

  static GridPtr make(GridKind kind, int dim, double h, double extent) {
    return kind == GridKind::line ? line(h, extent) : radial(dim, h, extent);
  }

  [[nodiscard]] GridKind kind() const noexcept { return kind_; }
  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] double spacing() const noexcept { return h_; }
  [[nodiscard]] double extent() const noexcept { return extent_; }
  /// M: half the node count on a line, the node count on a radial grid.
  [[nodiscard]] int points() const noexcept { return m_; }
  [[nodiscard]] std::size_t size() const noexcept { return coords_.size(); }
  [[nodiscard]] std::size_t edge_count() const noexcept { return edge_weights_.size(); }
  [[nodiscard]] bool is_line() const noexcept { return kind_ == GridKind::line; }

  [[nodiscard]] std::span<const double> coords() const noexcept { return coords_; }
  [[nodiscard]] std::span<const double> node_weights() const noexcept { return node_weights_; }
  [[nodiscard]] std::span<const double> edge_weights() const noexcept { return edge_weights_; }

  /// Nodes that are held at zero by the boundary condition.
  [[nodiscard]] bool is_pinned(std::size_t i) const noexcept {
    return kind_ == GridKind::line && (i == 0 || i + 1 == coords_.size());
  }

  /// Index of the outermost node that is free to move.
  [[nodiscard]] std::size_t outer_free_node() const noexcept {
    return kind_ == GridKind::line ? coords_.size() - 2 : coords_.size() - 1;
  }

  [[nodiscard]] std::string describe() const {
    std::ostringstream out;
    out << to_string(kind_) << "(N=" << dim_ << ", h=" << h_ << ", R=" << extent_ << ", M=" << m_ << ")";
    return out.str();
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.kind_ == b.kind_ && a.dim_ == b.dim_ && a.h_ == b.h_ && a.m_ == b.m_;
  }

 private:
  Grid(GridKind kind, int dim, double h, double extent) : kind_(kind), dim_(dim), h_(h), extent_(extent) {
    require(std::isfinite(h) && h > 0.0, "grid spacing h must be > 0");
    require(std::isfinite(extent) && extent > 0.0, "grid extent R must be > 0");
    require(dim >= 1, "grid dimension must be >= 1");
    require(kind != GridKind::line || dim == 1, "line grids are one dimensional");
    m_ = static_cast<int>(std::lround(extent / h));
    require(m_ >= min_points, "grid needs at least 16 points (M = R/h >= 16)");
    require(std::abs(m_ * h - extent) <= 1e-9 * extent, "R must be an integer multiple of h");
    if (kind == GridKind::line)
      build_line();
    else
      build_radial();
  }

  void build_line() {
    const std::size_t n = 2 * static_cast<std::size_t>(m_) + 1;
    coords_.resize(n);
    node_weights_.assign(n, h_);
    for (std::size_t i = 0; i < n; ++i) coords_[i] = (static_cast<double>(i) - m_) * h_;
    node_weights_.front() = node_weights_.back() = 0.5 * h_;
    edge_weights_.assign(n - 1, h_);
  }

  // Node weights follow the composite rule S r_i^{N-1} h, with the origin
  // cell volume S (h/2)^N / N at r = 0. Edge weights are fixed by requiring
  // the Laplacian to be exact on r^2, which gives
  //   a_{i+1/2} = 2N (w_0 + ... + w_i) / (2i + 1)  ~  S r_{i+1/2}^{N-1} h.
  void build_radial() {
    const std::size_t n = static_cast<std::size_t>(m_);
    const double area = sphere_area(dim_);
    coords_.resize(n);
    node_weights_.resize(n);
    edge_weights_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double r = static_cast<double>(i) * h_;
      coords_[i] = r;
      node_weights_[i] = i == 0 ? area * std::pow(0.5 * h_, dim_) / dim_ : area * std::pow(r, dim_ - 1) * h_;
    }
    double cumulative = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      cumulative += node_weights_[i];
      edge_weights_[i] = 2.0 * dim_ * cumulative / (2.0 * static_cast<double>(i) + 1.0);
    }
  }

  GridKind kind_;
  int dim_;
  double h_;
  double extent_;
  int m_ = 0;
  std::vector<double> coords_;
  std::vector<double> node_weights_;
  std::vector<double> edge_weights_;
};

}  // namespace qsl
