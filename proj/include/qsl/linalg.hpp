#pragma once

// Banded solvers for the 1-D operators of the library.

#include <array>
#include <cmath>
#include <vector>

#include "qsl/error.hpp"

namespace qsl::linalg {

/// Thomas algorithm: lower[i] multiplies x[i-1], upper[i] multiplies x[i+1].
inline std::vector<double> solve_tridiagonal(const std::vector<double>& lower, std::vector<double> diag,
                                             const std::vector<double>& upper, std::vector<double> rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    if (diag[i - 1] == 0.0) throw NumericalError("tridiagonal solve: zero pivot");
    const double f = lower[i] / diag[i - 1];
    diag[i] -= f * upper[i - 1];
    rhs[i] -= f * rhs[i - 1];
  }
  std::vector<double> x(n);
  x[n - 1] = rhs[n - 1] / diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
  return x;
}

/// Row-major 2x2 block.
struct Mat2 {
  double a = 0, b = 0, c = 0, d = 0;

  [[nodiscard]] double det() const { return a * d - b * c; }
  [[nodiscard]] Mat2 inverse() const {
    const double D = det();
    if (D == 0.0 || !std::isfinite(D)) throw NumericalError("block tridiagonal solve: singular pivot block");
    return {d / D, -b / D, -c / D, a / D};
  }
  friend Mat2 operator*(const Mat2& x, const Mat2& y) {
    return {x.a * y.a + x.b * y.c, x.a * y.b + x.b * y.d, x.c * y.a + x.d * y.c, x.c * y.b + x.d * y.d};
  }
  friend Mat2 operator-(const Mat2& x, const Mat2& y) { return {x.a - y.a, x.b - y.b, x.c - y.c, x.d - y.d}; }
};

using Vec2 = std::array<double, 2>;

inline Vec2 operator*(const Mat2& m, const Vec2& v) { return {m.a * v[0] + m.b * v[1], m.c * v[0] + m.d * v[1]}; }
inline Vec2 operator-(const Vec2& x, const Vec2& y) { return {x[0] - y[0], x[1] - y[1]}; }

/// Block Thomas algorithm for 2x2 blocks (no pivoting across blocks).
inline std::vector<Vec2> solve_block_tridiagonal(const std::vector<Mat2>& lower, std::vector<Mat2> diag,
                                                 const std::vector<Mat2>& upper, std::vector<Vec2> rhs) {
  const std::size_t n = diag.size();
  std::vector<Mat2> inv(n);
  inv[0] = diag[0].inverse();
  for (std::size_t i = 1; i < n; ++i) {
    const Mat2 f = lower[i] * inv[i - 1];
    diag[i] = diag[i] - f * upper[i - 1];
    rhs[i] = rhs[i] - f * rhs[i - 1];
    inv[i] = diag[i].inverse();
  }
  std::vector<Vec2> x(n);
  x[n - 1] = inv[n - 1] * rhs[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) x[i] = inv[i] * (rhs[i] - upper[i] * x[i + 1]);
  return x;
}

}  // namespace qsl::linalg
