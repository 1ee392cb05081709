#pragma once

#include <algorithm>
#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>
#include <cmath>
#include <complex>
#include <concepts>
#include <limits>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "qsl/error.hpp"
#include "qsl/grid.hpp"

namespace qsl {

using complex = std::complex<double>;

template <class T>
concept FieldScalar = std::same_as<T, double> || std::same_as<T, complex>;

enum class Parity { none, even };

/// Samples of a real or complex function on a grid.
template <FieldScalar T>
class BasicField {
 public:
  using value_type = T;

  BasicField() = default;

  explicit BasicField(GridPtr grid, Parity parity = Parity::none)
      : grid_(std::move(grid)), values_(grid_ ? grid_->size() : 0), parity_(parity) {
    require(grid_ != nullptr, "field needs a grid");
  }

  BasicField(GridPtr grid, std::vector<T> values, Parity parity = Parity::none)
      : grid_(std::move(grid)), values_(std::move(values)), parity_(parity) {
    require(grid_ != nullptr, "field needs a grid");
    require(values_.size() == grid_->size(), "field length does not match its grid");
  }

  [[nodiscard]] const Grid& grid() const { return *grid_; }
  [[nodiscard]] const GridPtr& grid_ptr() const { return grid_; }
  [[nodiscard]] std::size_t size() const { return values_.size(); }
  [[nodiscard]] Parity parity() const { return parity_; }
  void set_parity(Parity parity) { parity_ = parity; }

  [[nodiscard]] std::span<const T> values() const { return values_; }
  [[nodiscard]] std::span<T> values() { return values_; }
  [[nodiscard]] const std::vector<T>& vector() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  BasicField& operator*=(T s) {
    for (auto& v : values_) v *= s;
    return *this;
  }
  BasicField& operator+=(const BasicField& other) {
    require(other.size() == size(), "field size mismatch");
    for (std::size_t i = 0; i < size(); ++i) values_[i] += other.values_[i];
    return *this;
  }
  BasicField& operator-=(const BasicField& other) {
    require(other.size() == size(), "field size mismatch");
    for (std::size_t i = 0; i < size(); ++i) values_[i] -= other.values_[i];
    return *this;
  }
  friend BasicField operator*(T s, BasicField f) { return f *= s; }
  friend BasicField operator+(BasicField a, const BasicField& b) { return a += b; }
  friend BasicField operator-(BasicField a, const BasicField& b) { return a -= b; }

 private:
  GridPtr grid_;
  std::vector<T> values_;
  Parity parity_ = Parity::none;
};

using Field = BasicField<complex>;
using RealField = BasicField<double>;

/// Evaluates `f` at every grid coordinate.
template <class F>
auto sample(const GridPtr& grid, F&& f) {
  using R = std::remove_cvref_t<std::invoke_result_t<F, double>>;
  using T = std::conditional_t<std::is_same_v<R, complex>, complex, double>;
  std::vector<T> values(grid->size());
  const auto x = grid->coords();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = grid->is_pinned(i) ? T{} : T(f(x[i]));
  return BasicField<T>(grid, std::move(values));
}

inline Field to_complex(const RealField& f) {
  std::vector<complex> v(f.values().begin(), f.values().end());
  return Field(f.grid_ptr(), std::move(v), f.parity());
}

inline RealField real_part(const Field& f) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) v[i] = f[i].real();
  return RealField(f.grid_ptr(), std::move(v), f.parity());
}

inline RealField modulus(const Field& f) {
  std::vector<double> v(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) v[i] = std::abs(f[i]);
  return RealField(f.grid_ptr(), std::move(v), f.parity());
}

inline double norm_sq(double x) { return x * x; }
inline double norm_sq(const complex& z) { return std::norm(z); }
inline double conj_mul_re(double a, double b) { return a * b; }
inline double conj_mul_re(const complex& a, const complex& b) { return (std::conj(a) * b).real(); }

// ---------------------------------------------------------------------------
// Discrete calculus

namespace detail {

/// Node value with the ghost zero past the last radial node.
template <class T>
T node_or_ghost(std::span<const T> f, std::size_t i) {
  return i < f.size() ? f[i] : T{};
}

}  // namespace detail

/// Forward differences (f_{i+1} - f_i) / h on every edge of the grid.
template <FieldScalar T>
std::vector<T> edge_differences(const Grid& grid, std::span<const T> f) {
  const double inv_h = 1.0 / grid.spacing();
  std::vector<T> d(grid.edge_count());
  for (std::size_t e = 0; e < d.size(); ++e) d[e] = (detail::node_or_ghost(f, e + 1) - f[e]) * inv_h;
  return d;
}

/// Divergence-form operator  (1/w_i) [c a D f]_{i-1/2}^{i+1/2} / h  with an
/// optional per-edge coefficient c (defaults to 1, i.e. the Laplacian).
template <FieldScalar T>
std::vector<T> apply_laplacian(const Grid& grid, std::span<const T> f, std::span<const double> edge_coef = {}) {
  const auto w = grid.node_weights();
  const auto a = grid.edge_weights();
  const double inv_h = 1.0 / grid.spacing();
  const std::size_t n = f.size();
  std::vector<T> flux(grid.edge_count());
  for (std::size_t e = 0; e < flux.size(); ++e) {
    const double c = edge_coef.empty() ? 1.0 : edge_coef[e];
    flux[e] = c * a[e] * (detail::node_or_ghost(f, e + 1) - f[e]) * inv_h;
  }
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (grid.is_pinned(i)) continue;
    const T right = i < flux.size() ? flux[i] : T{};
    const T left = i > 0 ? flux[i - 1] : T{};
    out[i] = (right - left) * inv_h / w[i];
  }
  return out;
}

/// Largest modulus on the outermost free node(s): the truncation monitor.
template <FieldScalar T>
double boundary_amplitude(const BasicField<T>& f) {
  const Grid& g = f.grid();
  const std::size_t last = g.outer_free_node();
  double amp = std::abs(f[last]);
  if (g.is_line()) amp = std::max(amp, std::abs(f[1]));
  return amp;
}

template <FieldScalar T>
void check_boundary(const BasicField<T>& f, double tol, const std::string& what = "field") {
  const double amp = boundary_amplitude(f);
  if (!(amp <= tol))
    throw DomainError(what + " does not vanish at the outer boundary (|f| = " + std::to_string(amp) +
                      " > " + std::to_string(tol) + "); increase R");
}

/// Discrete Laplacian (second-order, Dirichlet at the outer boundary).
/// Throws DomainError when the field has not decayed at the boundary.
template <FieldScalar T>
BasicField<T> laplacian(const BasicField<T>& f, double truncation_tol = std::numeric_limits<double>::infinity()) {
  check_boundary(f, truncation_tol);
  return BasicField<T>(f.grid_ptr(), apply_laplacian<T>(f.grid(), f.values()), f.parity());
}

/// Node gradient: centred differences, one-sided at the ends of a line,
/// zero at the radial origin (even symmetry).
template <FieldScalar T>
BasicField<T> gradient(const BasicField<T>& f) {
  const Grid& g = f.grid();
  const auto v = f.values();
  const std::size_t n = v.size();
  const double h = g.spacing();
  std::vector<T> d(n);
  if (g.is_line()) {
    d[0] = (v[1] - v[0]) / h;
    d[n - 1] = (v[n - 1] - v[n - 2]) / h;
    for (std::size_t i = 1; i + 1 < n; ++i) d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
  } else {
    d[0] = T{};
    for (std::size_t i = 1; i < n; ++i) d[i] = (detail::node_or_ghost(v, i + 1) - v[i - 1]) / (2.0 * h);
  }
  return BasicField<T>(f.grid_ptr(), std::move(d));
}

/// Quadrature sum_i w_i f_i (radial weights include the sphere area).
inline double integrate(const RealField& f) {
  const auto w = f.grid().node_weights();
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * f[i];
  return sum;
}

/// Real L2 inner product  Re sum w conj(f) g.
template <FieldScalar T>
double inner(const BasicField<T>& f, const BasicField<T>& g) {
  const auto w = f.grid().node_weights();
  double sum = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * conj_mul_re(f[i], g[i]);
  return sum;
}

/// Real part of the H^1 inner product  <f,g>_{L2} + <Df,Dg>_{edges}.
template <FieldScalar T>
T h1_inner_complex(const BasicField<T>& f, const BasicField<T>& g) {
  const Grid& grid = f.grid();
  const auto w = grid.node_weights();
  const auto a = grid.edge_weights();
  T sum{};
  auto cj = [](const T& z) {
    if constexpr (std::is_same_v<T, complex>)
      return std::conj(z);
    else
      return z;
  };
  for (std::size_t i = 0; i < f.size(); ++i) sum += w[i] * cj(f[i]) * g[i];
  const auto df = edge_differences<T>(grid, f.values());
  const auto dg = edge_differences<T>(grid, g.values());
  for (std::size_t e = 0; e < df.size(); ++e) sum += a[e] * cj(df[e]) * dg[e];
  return sum;
}

template <FieldScalar T>
double h1_norm(const BasicField<T>& f) {
  return std::sqrt(std::abs(h1_inner_complex(f, f)));
}

template <FieldScalar T>
double l2_norm(const BasicField<T>& f) {
  return std::sqrt(inner(f, f));
}

// ---------------------------------------------------------------------------
// Interpolation

/// Cubic B-spline interpolant of a real node array, extended by zero outside
/// the grid (and evenly across r = 0 on radial grids).
class CubicInterpolant {
 public:
  CubicInterpolant(const Grid& grid, std::span<const double> values) : grid_kind_(grid.kind()), extent_(grid.extent()) {
    const double h = grid.spacing();
    std::vector<double> data;
    if (grid.is_line()) {
      data.assign(values.begin(), values.end());
      origin_ = -grid.extent();
    } else {
      // Mirror across r = 0 and append the ghost zeros at r = +-R.
      const std::size_t n = values.size();
      data.reserve(2 * n + 1);
      data.push_back(0.0);
      for (std::size_t i = n; i-- > 1;) data.push_back(values[i]);
      for (std::size_t i = 0; i < n; ++i) data.push_back(values[i]);
      data.push_back(0.0);
      origin_ = -grid.extent();
    }
    spline_ = boost::math::interpolators::cardinal_cubic_b_spline<double>(data.begin(), data.end(), origin_, h);
  }

  [[nodiscard]] double operator()(double x) const {
    if (grid_kind_ == GridKind::radial) x = std::abs(x);
    if (x <= -extent_ || x >= extent_) return 0.0;
    return spline_(x);
  }

 private:
  GridKind grid_kind_;
  double extent_;
  double origin_ = 0.0;
  boost::math::interpolators::cardinal_cubic_b_spline<double> spline_;
};

/// Resamples `f` at the points produced by `map(x)` for every node x.
template <FieldScalar T, class Map>
BasicField<T> resample(const BasicField<T>& f, Map&& map, double amplitude = 1.0) {
  const Grid& g = f.grid();
  const auto x = g.coords();
  std::vector<T> out(f.size());
  if constexpr (std::is_same_v<T, double>) {
    CubicInterpolant re(g, f.values());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = g.is_pinned(i) ? 0.0 : amplitude * re(map(x[i]));
  } else {
    std::vector<double> rv(f.size()), iv(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) {
      rv[i] = f[i].real();
      iv[i] = f[i].imag();
    }
    CubicInterpolant re(g, rv), im(g, iv);
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (g.is_pinned(i)) continue;
      const double y = map(x[i]);
      out[i] = amplitude * complex(re(y), im(y));
    }
  }
  return BasicField<T>(f.grid_ptr(), std::move(out), f.parity());
}

/// f(x - shift) on a line grid.
template <FieldScalar T>
BasicField<T> translate(const BasicField<T>& f, double shift) {
  require(f.grid().is_line(), "translation is defined on line grids only");
  return resample(f, [shift](double x) { return x - shift; });
}

}  // namespace qsl
