#pragma once

// Change of unknown u = r(v) with r' = 1/sqrt(1 + 2 r^2), r(0) = 0, and its
// inverse mu, mu' = sqrt(1 + 2 s^2). Under this map the stationary problem
//
//   -Lap u - u Lap(u^2) + omega u = |u|^{p-1} u
//
// becomes the semilinear equation -Lap v = k(v).

#include <cmath>
#include <numbers>
#include <vector>

#include "qsl/error.hpp"
#include "qsl/field.hpp"
#include "qsl/functionals.hpp"
#include "qsl/params.hpp"

namespace qsl::dual {

inline double mu_prime(double s) { return std::sqrt(1.0 + 2.0 * s * s); }

inline double mu(double s) {
  return 0.5 * s * std::sqrt(1.0 + 2.0 * s * s) + std::asinh(std::numbers::sqrt2 * s) / (2.0 * std::numbers::sqrt2);
}

/// Inverse of mu. Newton from an upper bound of the root: mu is convex on
/// s > 0, so the iterates decrease monotonically and stay in [0, |s|].
inline double r(double s) {
  if (s == 0.0) return 0.0;
  if (!std::isfinite(s)) throw NumericalError("r(s) needs a finite argument");
  const double a = std::abs(s);
  // mu(t) >= t and mu(t) >= t^2 / sqrt2, so both bounds lie above the root.
  double t = std::min(a, std::sqrt(std::numbers::sqrt2 * a));
  const double tol = 1e-15 * std::max(1.0, a);
  for (int it = 0; it < 100; ++it) {
    const double f = mu(t) - a;
    const double step = f / mu_prime(t);
    double next = t - step;
    if (next < 0.0) next = 0.5 * t;
    if (std::abs(next - t) <= 1e-16 * std::max(1.0, t) || std::abs(f) <= tol) return std::copysign(next, s);
    t = next;
  }
  throw NumericalError("Newton inversion of mu did not converge");
}

inline double r_prime(double v) {
  const double u = r(v);
  return 1.0 / std::sqrt(1.0 + 2.0 * u * u);
}

/// k(v) = r'(v) (|r|^{p-1} r - omega r).
inline double k(double v, double p, double omega) {
  const double u = r(v);
  return (std::pow(std::abs(u), p - 1.0) * u - omega * u) / std::sqrt(1.0 + 2.0 * u * u);
}

/// K(v) = |r|^{p+1}/(p+1) - omega r^2 / 2, the primitive of k with K(0) = 0.
inline double K(double v, double p, double omega) {
  const double u = r(v);
  return std::pow(std::abs(u), p + 1.0) / (p + 1.0) - 0.5 * omega * u * u;
}

inline double k(double v, const ModelParams& m) { return k(v, m.p, m.frequency()); }
inline double K(double v, const ModelParams& m) { return K(v, m.p, m.frequency()); }

template <FieldScalar T>
RealField map_r(const BasicField<T>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = r(std::real(v[i]));
  return RealField(v.grid_ptr(), std::move(out), v.parity());
}

template <FieldScalar T>
RealField map_mu(const BasicField<T>& u) {
  std::vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = mu(std::real(u[i]));
  return RealField(u.grid_ptr(), std::move(out), u.parity());
}

struct DualIntegrals {
  double grad_sq = 0.0;  // int |grad v|^2
  double K = 0.0;        // int K(v)
};

inline DualIntegrals dual_integrals(const RealField& v, const ModelParams& m) {
  const double omega = m.frequency();
  const auto w = v.grid().node_weights();
  const auto a = v.grid().edge_weights();
  DualIntegrals out;
  for (std::size_t i = 0; i < v.size(); ++i) out.K += w[i] * K(v[i], m.p, omega);
  const auto d = edge_differences<double>(v.grid(), v.values());
  for (std::size_t e = 0; e < d.size(); ++e) out.grad_sq += a[e] * d[e] * d[e];
  return out;
}

/// T_omega(v) = 1/2 int |grad v|^2 - int K(v).
inline double dual_action(const RealField& v, const ModelParams& m) {
  const DualIntegrals I = dual_integrals(v, m);
  return 0.5 * I.grad_sq - I.K;
}

/// P~(v) = (N - 2) int |grad v|^2 - 2N int K(v).
inline double dual_pohozaev(const RealField& v, const ModelParams& m) {
  const DualIntegrals I = dual_integrals(v, m);
  return (m.dim - 2.0) * I.grad_sq - 2.0 * m.dim * I.K;
}

/// A semilinear profile v together with the original unknown u = r(v).
struct DualPair {
  RealField v;
  RealField u;
  ModelParams params;

  static DualPair from_v(RealField v, const ModelParams& m) {
    RealField u = map_r(v);
    return DualPair{std::move(v), std::move(u), m};
  }
  static DualPair from_u(RealField u, const ModelParams& m) {
    RealField v = map_mu(u);
    return DualPair{std::move(v), std::move(u), m};
  }

  /// max_i |mu(u_i) - v_i|.
  [[nodiscard]] double round_trip_error() const {
    double err = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) err = std::max(err, std::abs(mu(u[i]) - v[i]));
    return err;
  }
};

}  // namespace qsl::dual
