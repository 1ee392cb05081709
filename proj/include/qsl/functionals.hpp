#pragma once

// Scalar functionals of the quasilinear Schrodinger equation
//
//   i phi_t + Lap phi + phi Lap |phi|^2 + |phi|^{p-1} phi = 0
//
// evaluated on discrete fields. Everything is built from five discrete
// integrals:
//
//   M = sum w |phi|^2                    (mass)
//   A = sum a |D phi|^2                  (int |grad phi|^2)
//   B = 1/4 sum a |D |phi|^2|^2          (int |phi|^2 |grad|phi||^2)
//   C = sum w |phi|^{p+1}
//   V = sum w |x|^2 |phi|^2
//
// and the energy E = A/2 + B - C/(p+1) is the exact Hamiltonian of the
// semi-discrete flow, whose gradient is energy_gradient() below.

#include <cmath>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "qsl/error.hpp"
#include "qsl/field.hpp"
#include "qsl/params.hpp"

namespace qsl {

/// Floor applied to |phi| before differencing it.
inline constexpr double modulus_floor = 1e-30;

struct Integrals {
  double mass = 0.0;
  double grad_sq = 0.0;          // A
  double quasilinear = 0.0;      // B, as 1/4 int |grad |phi|^2|^2
  double quasilinear_alt = 0.0;  // B, as int |phi|^2 |grad |phi||^2
  double grad_modulus_sq = 0.0;  // int |grad |phi||^2
  double power = 0.0;            // C = int |phi|^{p+1}

  [[nodiscard]] bool finite() const {
    return std::isfinite(mass) && std::isfinite(grad_sq) && std::isfinite(quasilinear) && std::isfinite(power);
  }
};

template <FieldScalar T>
Integrals integrals(const BasicField<T>& phi, double p) {
  const Grid& g = phi.grid();
  const auto w = g.node_weights();
  const auto a = g.edge_weights();
  const double inv_h = 1.0 / g.spacing();
  const auto v = phi.values();
  const std::size_t n = v.size();

  Integrals out;
  std::vector<double> rho(n), mod(n);
  for (std::size_t i = 0; i < n; ++i) {
    rho[i] = norm_sq(v[i]);
    mod[i] = std::max(std::sqrt(rho[i]), modulus_floor);
    out.mass += w[i] * rho[i];
    out.power += w[i] * std::pow(rho[i], 0.5 * (p + 1.0));
  }
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const bool ghost = e + 1 >= n;
    const T next = ghost ? T{} : v[e + 1];
    const double rho_next = ghost ? 0.0 : rho[e + 1];
    const double mod_next = ghost ? 0.0 : mod[e + 1];
    const double d_phi = norm_sq((next - v[e]) * inv_h);
    const double d_rho = (rho_next - rho[e]) * inv_h;
    const double d_mod = (mod_next - mod[e]) * inv_h;
    out.grad_sq += a[e] * d_phi;
    out.quasilinear += 0.25 * a[e] * d_rho * d_rho;
    out.quasilinear_alt += a[e] * 0.5 * (mod[e] * mod[e] + mod_next * mod_next) * d_mod * d_mod;
    out.grad_modulus_sq += a[e] * d_mod * d_mod;
  }
  return out;
}

/// Coefficients of sigma -> F(phi^sigma) under phi^sigma(x) = sigma^{N/2} phi(sigma x).
struct ScalingLaw {
  int dim = 1;
  double p = 3.0;
  Integrals base;

  [[nodiscard]] double power_exponent() const { return 0.5 * dim * (p - 1.0); }
  [[nodiscard]] double grad_sq(double s) const { return s * s * base.grad_sq; }
  [[nodiscard]] double quasilinear(double s) const { return std::pow(s, dim + 2) * base.quasilinear; }
  [[nodiscard]] double power(double s) const { return std::pow(s, power_exponent()) * base.power; }
  [[nodiscard]] double energy(double s) const {
    return 0.5 * grad_sq(s) + quasilinear(s) - power(s) / (p + 1.0);
  }
  [[nodiscard]] double action(double s, double omega) const { return energy(s) + 0.5 * omega * base.mass; }
  [[nodiscard]] double virial(double s) const {
    return grad_sq(s) + (dim + 2.0) * quasilinear(s) - dim * (p - 1.0) / (2.0 * (p + 1.0)) * power(s);
  }
};

// ---------------------------------------------------------------------------
// Scalar functionals from the integrals

namespace formulas {

inline double energy(const Integrals& I, double p) { return 0.5 * I.grad_sq + I.quasilinear - I.power / (p + 1.0); }
inline double action(const Integrals& I, double p, double omega) { return energy(I, p) + 0.5 * omega * I.mass; }
inline double virial_Q(const Integrals& I, int dim, double p) {
  return I.grad_sq + (dim + 2.0) * I.quasilinear - dim * (p - 1.0) / (2.0 * (p + 1.0)) * I.power;
}
inline double pohozaev_P(const Integrals& I, int dim, double p, double omega) {
  return (dim - 2.0) / dim * (0.5 * I.grad_sq + I.quasilinear) + 0.5 * omega * I.mass - I.power / (p + 1.0);
}
inline double nehari_I(const Integrals& I, double p, double omega) {
  (void)p;
  return I.grad_sq + omega * I.mass + 4.0 * I.quasilinear - I.power;
}
/// Right-hand side of E_omega = (1/N) int |grad u|^2 + 2 |u|^2 |grad|u||^2 on solutions.
inline double pohozaev_action(const Integrals& I, int dim) { return (I.grad_sq + 2.0 * I.quasilinear) / dim; }
/// E_omega restricted to the Nehari set I_omega = 0.
inline double nehari_action(const Integrals& I, double p, double omega) {
  const double k = (p - 1.0) / (2.0 * (p + 1.0));
  return k * I.grad_sq + (p - 3.0) / (p + 1.0) * I.quasilinear + omega * k * I.mass;
}

}  // namespace formulas

template <FieldScalar T>
double checked(double value, const BasicField<T>& phi, const char* what) {
  if (!std::isfinite(value))
    throw NumericalError(std::string(what) + " is not finite on " + phi.grid().describe());
  return value;
}

template <FieldScalar T>
double mass(const BasicField<T>& phi) {
  return integrals(phi, 1.0).mass;
}

template <FieldScalar T>
double energy(const BasicField<T>& phi, const ModelParams& params) {
  return checked(formulas::energy(integrals(phi, params.p), params.p), phi, "energy");
}

template <FieldScalar T>
double action_omega(const BasicField<T>& phi, const ModelParams& params) {
  return checked(formulas::action(integrals(phi, params.p), params.p, params.frequency()), phi, "action");
}

template <FieldScalar T>
double virial_Q(const BasicField<T>& phi, const ModelParams& params) {
  return checked(formulas::virial_Q(integrals(phi, params.p), params.dim, params.p), phi, "Q");
}

template <FieldScalar T>
double pohozaev_P(const BasicField<T>& phi, const ModelParams& params) {
  return checked(formulas::pohozaev_P(integrals(phi, params.p), params.dim, params.p, params.frequency()), phi, "P");
}

template <FieldScalar T>
double nehari_I(const BasicField<T>& phi, const ModelParams& params) {
  return checked(formulas::nehari_I(integrals(phi, params.p), params.p, params.frequency()), phi, "I_omega");
}

/// V = int |x|^2 |phi|^2.
template <FieldScalar T>
double variance(const BasicField<T>& phi) {
  const auto w = phi.grid().node_weights();
  const auto x = phi.grid().coords();
  double sum = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) sum += w[i] * x[i] * x[i] * norm_sq(phi[i]);
  return sum;
}

/// V' = 4 Im int (x . grad phi) conj(phi); on radial grids x . grad = r d/dr.
template <FieldScalar T>
double variance_prime(const BasicField<T>& phi) {
  if constexpr (std::is_same_v<T, double>) {
    return 0.0;
  } else {
    const auto w = phi.grid().node_weights();
    const auto x = phi.grid().coords();
    const Field d = gradient(phi);
    double sum = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) sum += w[i] * (x[i] * d[i] * std::conj(phi[i])).imag();
    return 4.0 * sum;
  }
}

/// Pieces of the Gagliardo-Nirenberg type bound (N >= 3)
///   int |u|^{p+1} <= K (int |u|^2)^{1-theta} (int |u|^2 |grad u|^2)^{theta N/(N-2)}.
struct GNTerms {
  double lhs = 0.0;
  double rhs_core = 0.0;
  double theta = 0.0;
  double exponent = 0.0;  // theta N / (N - 2)
  [[nodiscard]] double ratio() const { return lhs / rhs_core; }
};

inline double gn_theta(int dim, double p) { return (p - 1.0) * (dim - 2.0) / (2.0 * (dim + 2.0)); }

template <FieldScalar T>
GNTerms gn_functional(const BasicField<T>& u, const ModelParams& params) {
  require(params.dim >= 3, "the Gagliardo-Nirenberg bound needs N >= 3");
  const Integrals I = integrals(u, params.p);
  GNTerms out;
  out.theta = gn_theta(params.dim, params.p);
  out.exponent = out.theta * params.dim / (params.dim - 2.0);
  out.lhs = I.power;
  out.rhs_core = std::pow(I.mass, 1.0 - out.theta) * std::pow(I.quasilinear, out.exponent);
  return out;
}

// ---------------------------------------------------------------------------
// Gradients

/// L2(w) gradient of the discrete energy:
///   E'(phi) = -L phi - phi L|phi|^2 - |phi|^{p-1} phi.
template <FieldScalar T>
BasicField<T> energy_gradient(const BasicField<T>& phi, double p) {
  const Grid& g = phi.grid();
  const auto v = phi.values();
  std::vector<double> rho(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) rho[i] = norm_sq(v[i]);
  const auto lap = apply_laplacian<T>(g, v);
  const auto lap_rho = apply_laplacian<double>(g, rho);
  std::vector<T> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (g.is_pinned(i)) continue;
    out[i] = -lap[i] - v[i] * lap_rho[i] - std::pow(rho[i], 0.5 * (p - 1.0)) * v[i];
  }
  return BasicField<T>(phi.grid_ptr(), std::move(out), phi.parity());
}

/// Residual -Lap u - u Lap(u^2) + omega u - |u|^{p-1} u of the stationary equation.
template <FieldScalar T>
BasicField<T> stationary_residual(const BasicField<T>& u, double p, double omega) {
  BasicField<T> r = energy_gradient(u, p);
  for (std::size_t i = 0; i < u.size(); ++i)
    if (!u.grid().is_pinned(i)) r[i] += omega * u[i];
  return r;
}

// ---------------------------------------------------------------------------
// Report

struct FunctionalReport {
  double mass = 0.0;
  double kinetic = 0.0;
  double quasilinear = 0.0;
  double potential = 0.0;
  double E = 0.0;
  double E_omega = 0.0;
  double Q = 0.0;
  double P = 0.0;
  double I_omega = 0.0;
  double V = 0.0;
  double Vprime = 0.0;
};

template <FieldScalar T>
FunctionalReport report(const BasicField<T>& phi, const ModelParams& params) {
  const Integrals I = integrals(phi, params.p);
  if (!I.finite()) throw NumericalError("field is not in the discrete energy space (non-finite integrals)");
  const double omega = params.omega.value_or(0.0);
  FunctionalReport r;
  r.mass = I.mass;
  r.kinetic = 0.5 * I.grad_sq;
  r.quasilinear = I.quasilinear;
  r.potential = I.power / (params.p + 1.0);
  r.E = formulas::energy(I, params.p);
  r.E_omega = formulas::action(I, params.p, omega);
  r.Q = formulas::virial_Q(I, params.dim, params.p);
  r.P = formulas::pohozaev_P(I, params.dim, params.p, omega);
  r.I_omega = formulas::nehari_I(I, params.p, omega);
  r.V = variance(phi);
  r.Vprime = variance_prime(phi);
  return r;
}

inline void to_json(nlohmann::json& j, const FunctionalReport& r) {
  j = nlohmann::json{{"mass", r.mass}, {"kinetic", r.kinetic}, {"quasilinear", r.quasilinear},
                     {"potential", r.potential}, {"E", r.E}, {"E_omega", r.E_omega},
                     {"Q", r.Q}, {"P", r.P}, {"I_omega", r.I_omega},
                     {"V", r.V}, {"Vprime", r.Vprime}};
}

inline std::string csv_header(const FunctionalReport*) {
  return "mass,kinetic,quasilinear,potential,E,E_omega,Q,P,I_omega,V,Vprime";
}

}  // namespace qsl
