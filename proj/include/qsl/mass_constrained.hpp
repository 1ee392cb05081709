#pragma once

// Constrained minimisation  m(c) = inf { E(u) : ||u||_2^2 = c }.
//
// The flow is a preconditioned Riemannian gradient descent on the sphere
// ||u||^2 = c: with P = beta - div((1 + 2u^2) grad .), the search direction
// d = -P^{-1}(E'(u) - lambda u) is L2-orthogonal to u for
// lambda = <P^{-1}E'(u), u> / <P^{-1}u, u>, and each step is renormalised back
// onto the sphere. Steps are halved until the energy decreases.
//
// A box of radius R cannot represent the vanishing minimising sequences that
// occur when m(c) = 0, so the reported m(c) also takes the infimum of the
// exact scaling law sigma -> E(u^sigma) of the box minimiser, and 0.

#include <algorithm>
#include <array>
#include <tuple>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <functional>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qsl/error.hpp"
#include "qsl/field.hpp"
#include "qsl/functionals.hpp"
#include "qsl/ground_state.hpp"
#include "qsl/linalg.hpp"
#include "qsl/params.hpp"

namespace qsl {

struct MinimizeOptions {
  int max_iter = 20000;
  double stall_tol = 1e-10;   // relative energy change ...
  int stall_window = 50;      // ... over this many iterations
  double initial_step = 1.0;
  int max_halvings = 40;
  double initial_width = 1.0;  // Gaussian seed exp(-x^2 / (2 w^2))
  bool record_history = true;
  double shape_tol = 1e-6;  // change of log W over stall_window iterations
};

struct FlowRecord {
  int iteration = 0;
  double energy = 0.0;
  double drift = 0.0;  // |M - c| / c
};

struct MassMinimizer {
  RealField u;
  double c = 0.0;
  double box_energy = 0.0;   // E(u) of the returned iterate
  double scaling_inf = 0.0;  // inf over sigma of E(u^sigma)
  double scaling_sigma = 1.0;
  double m_c = 0.0;          // min(box_energy, scaling_inf, 0)
  double lambda_c = 0.0;     // (A + 4B - C) / c
  double residual = 0.0;     // ||E'(u) - lambda u|| / ||E'(u)||
  int iterations = 0;
  bool converged = false;
  std::vector<FlowRecord> history;
};

inline void to_json(nlohmann::json& j, const MassMinimizer& r) {
  j = nlohmann::json{{"c", r.c},
                     {"m_c", r.m_c},
                     {"box_energy", r.box_energy},
                     {"scaling_inf", r.scaling_inf},
                     {"scaling_sigma", r.scaling_sigma},
                     {"lambda_c", r.lambda_c},
                     {"residual", r.residual},
                     {"iterations", r.iterations},
                     {"converged", r.converged}};
}

namespace detail {

/// Solves (beta - div(kappa grad)) x = rhs with kappa = 1 + u_i^2 + u_{i+1}^2 on edges.
inline std::vector<double> precondition(const RealField& u, double beta, std::span<const double> rhs) {
  const Grid& g = u.grid();
  const auto w = g.node_weights();
  const auto a = g.edge_weights();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  const std::size_t n = u.size();
  std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), b(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (g.is_pinned(i)) {
      diag[i] = 1.0;
      continue;
    }
    diag[i] = beta * w[i];
    b[i] = w[i] * rhs[i];
  }
  for (std::size_t e = 0; e < g.edge_count(); ++e) {
    const double ue = e + 1 < n ? u[e + 1] : 0.0;
    const double k = (1.0 + u[e] * u[e] + ue * ue) * a[e] * inv_h2;
    const bool left_free = !g.is_pinned(e);
    const bool right_free = e + 1 < n && !g.is_pinned(e + 1);
    if (left_free) diag[e] += k;
    if (right_free) diag[e + 1] += k;
    if (left_free && right_free) {
      upper[e] = -k;
      lower[e + 1] = -k;
    }
  }
  return linalg::solve_tridiagonal(lower, diag, upper, b);
}

inline void normalise_mass(RealField& u, double c) {
  const double m = mass(u);
  if (!(m > 0.0)) throw NumericalError("mass-constrained flow: iterate collapsed to zero");
  const double s = std::sqrt(c / m);
  for (std::size_t i = 0; i < u.size(); ++i) u[i] *= s;
}

inline double real_inner(const Grid& g, std::span<const double> x, std::span<const double> y) {
  const auto w = g.node_weights();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += w[i] * x[i] * y[i];
  return s;
}

}  // namespace detail

/// inf over sigma > 0 of the scaling law of `u`, and the minimising sigma.
inline std::pair<double, double> scaling_infimum(const RealField& u, const ModelParams& m) {
  const ScalingLaw law{m.dim, m.p, integrals(u, m.p)};
  auto f = [&](double t) { return law.energy(std::exp(t)); };
  constexpr double lo = -20.0, hi = 12.0;
  constexpr int n = 321;
  int best = 0;
  double best_val = f(lo);
  for (int i = 1; i < n; ++i) {
    const double v = f(lo + (hi - lo) * i / (n - 1));
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  const double step = (hi - lo) / (n - 1);
  const double a = lo + step * std::max(best - 1, 0);
  const double b = lo + step * std::min(best + 1, n - 1);
  const auto [t, v] = boost::math::tools::brent_find_minima(f, a, b, 50);
  return v < best_val ? std::pair{v, std::exp(t)} : std::pair{best_val, std::exp(lo + step * best)};
}

inline RealField gaussian_seed(const GridPtr& grid, double c, double width) {
  RealField u = sample(grid, [width](double x) { return std::exp(-x * x / (2.0 * width * width)); });
  detail::normalise_mass(u, c);
  return u;
}

// ---------------------------------------------------------------------------
// Scale-invariant shape problem
//
// For 1 + 4/N <= p < 3 + 4/N the sign of inf_sigma E(u^sigma) is decided by
//   W(u) = C / (A^alpha B^beta),  beta = (gamma - 2)/N,  alpha = 1 - beta,
// with gamma = N(p-1)/2, which is invariant under u -> u^sigma. Maximising W
// on the mass sphere gives the best profile for the scaling closure without
// the minimising sequence having to spread beyond the box.

struct ShapeResult {
  RealField u;
  double log_w = 0.0;
  int iterations = 0;
};

inline std::pair<double, double> weinstein_exponents(const ModelParams& m) {
  const double gamma = 0.5 * m.dim * (m.p - 1.0);
  const double beta = (gamma - 2.0) / m.dim;
  return {1.0 - beta, beta};
}

inline double log_weinstein(const Integrals& I, double alpha, double beta) {
  return std::log(I.power) - alpha * std::log(I.grad_sq) - beta * std::log(I.quasilinear);
}

inline ShapeResult maximize_shape(double c, const ModelParams& m, const GridPtr& grid, const MinimizeOptions& opt = {}) {
  const auto [alpha, beta] = weinstein_exponents(m);
  RealField u = gaussian_seed(grid, c, opt.initial_width);
  Integrals I = integrals(u, m.p);
  double F = log_weinstein(I, alpha, beta);
  double tau = opt.initial_step;
  std::vector<double> history{F};
  ShapeResult res;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const auto lap_u = apply_laplacian<double>(*grid, u.values());
    std::vector<double> rho(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) rho[i] = u[i] * u[i];
    const auto lap_rho = apply_laplacian<double>(*grid, rho);
    std::vector<double> gF(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (grid->is_pinned(i)) continue;
      const double dA = -2.0 * lap_u[i];
      const double dB = -u[i] * lap_rho[i];
      const double dC = (m.p + 1.0) * std::pow(std::abs(u[i]), m.p - 1.0) * u[i];
      gF[i] = dC / I.power - alpha * dA / I.grad_sq - beta * dB / I.quasilinear;
    }
    const auto pg = detail::precondition(u, 1.0, gF);
    const auto pu = detail::precondition(u, 1.0, u.values());
    const double mu = detail::real_inner(*grid, pg, u.values()) / detail::real_inner(*grid, pu, u.values());
    bool accepted = false;
    for (int k = 0; k <= opt.max_halvings; ++k, tau *= 0.5) {
      RealField trial = u;
      for (std::size_t i = 0; i < u.size(); ++i) trial[i] = std::abs(u[i] + tau * (pg[i] - mu * pu[i]));
      detail::normalise_mass(trial, c);
      const Integrals It = integrals(trial, m.p);
      const double Ft = log_weinstein(It, alpha, beta);
      if (Ft > F) {
        u = std::move(trial);
        I = It;
        F = Ft;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    tau = std::min(tau * 1.5, 1e3);
    history.push_back(F);
    const int k = static_cast<int>(history.size()) - 1;
    if (k >= opt.stall_window && std::abs(F - history[k - opt.stall_window]) < opt.shape_tol) {
      ++it;
      break;
    }
  }
  res.u = std::move(u);
  res.log_w = F;
  res.iterations = it;
  return res;
}

/// Minimises E on the mass sphere ||u||^2 = c, from `seed` or a Gaussian.
inline MassMinimizer minimize(double c, const ModelParams& m, const GridPtr& grid, const MinimizeOptions& opt = {},
                              std::optional<RealField> seed = std::nullopt) {
  m.validate();
  require(c > 0.0 && std::isfinite(c), "c must be > 0");
  if (m.p >= m.p_quasilinear_critical())
    throw PreconditionError("p >= 3 + 4/N: m(c) = -infinity; use unbounded_check instead");
  require(grid->dim() == m.dim, "grid dimension does not match N");

  RealField u = seed ? *seed : gaussian_seed(grid, c, opt.initial_width);
  require(u.grid() == *grid, "seed lives on a different grid");
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::abs(u[i]);
  detail::normalise_mass(u, c);

  MassMinimizer res;
  res.c = c;
  double E = energy(u, m);
  double beta = 0.05;
  double tau = opt.initial_step;
  std::vector<double> energies{E};
  if (opt.record_history) res.history.push_back({0, E, std::abs(mass(u) - c) / c});

  int it = 0;
  for (; it < opt.max_iter; ++it) {
    const RealField G = energy_gradient(u, m.p);
    const auto pg = detail::precondition(u, beta, G.values());
    const auto pu = detail::precondition(u, beta, u.values());
    const double lambda = detail::real_inner(*grid, pg, u.values()) / detail::real_inner(*grid, pu, u.values());
    std::vector<double> d(u.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = -(pg[i] - lambda * pu[i]);
    beta = std::max(-lambda, 0.05);

    bool accepted = false;
    for (int k = 0; k <= opt.max_halvings; ++k, tau *= 0.5) {
      RealField trial = u;
      for (std::size_t i = 0; i < d.size(); ++i) trial[i] = std::abs(u[i] + tau * d[i]);
      detail::normalise_mass(trial, c);
      const double Et = energy(trial, m);
      if (Et < E) {
        u = std::move(trial);
        E = Et;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No representable decrease: stationary to rounding.
      res.converged = true;
      break;
    }
    tau = std::min(tau * 1.5, 1e3);
    energies.push_back(E);
    if (opt.record_history) res.history.push_back({it + 1, E, std::abs(mass(u) - c) / c});
    const int k = static_cast<int>(energies.size()) - 1;
    if (k >= opt.stall_window) {
      const Integrals I = integrals(u, m.p);
      const double scale = std::max(std::abs(E), 0.5 * I.grad_sq + I.quasilinear);
      if (std::abs(energies[k - opt.stall_window] - E) < opt.stall_tol * scale) {
        res.converged = true;
        ++it;
        break;
      }
    }
  }

  const Integrals I = integrals(u, m.p);
  res.iterations = it;
  res.box_energy = E;
  res.lambda_c = (I.grad_sq + 4.0 * I.quasilinear - I.power) / c;
  RealField r = energy_gradient(u, m.p);
  const double gnorm = l2_norm(r);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= res.lambda_c * u[i];
  res.residual = gnorm > 0.0 ? l2_norm(r) / gnorm : 0.0;
  std::tie(res.scaling_inf, res.scaling_sigma) = scaling_infimum(u, m);
  if (m.p >= m.p_classical_critical()) {
    const ShapeResult shape = maximize_shape(c, m, grid, opt);
    const auto [inf_shape, sigma_shape] = scaling_infimum(shape.u, m);
    if (inf_shape < res.scaling_inf) {
      res.scaling_inf = inf_shape;
      res.scaling_sigma = sigma_shape;
    }
  }
  res.m_c = std::min({E, res.scaling_inf, 0.0});
  res.u = std::move(u);
  return res;
}

/// Best of several Gaussian seeds.
inline MassMinimizer minimize_multistart(double c, const ModelParams& m, const GridPtr& grid,
                                         const std::vector<double>& widths = {1.0, 2.5}, MinimizeOptions opt = {}) {
  std::optional<MassMinimizer> best;
  for (double w : widths) {
    opt.initial_width = w;
    MassMinimizer r = minimize(c, m, grid, opt);
    if (!best || r.m_c < best->m_c) best = std::move(r);
  }
  return std::move(*best);
}

// ---------------------------------------------------------------------------
// Unboundedness for p > 3 + 4/N

struct UnboundedCurve {
  std::vector<std::pair<double, double>> grid_curve;  // (sigma, E) from rescaled fields
  std::vector<std::pair<double, double>> law_curve;   // (sigma, E) from the scaling law
  double kinetic_exponent = 0.0;
  double quasilinear_exponent = 0.0;
  double potential_exponent = 0.0;
  double tail_exponent = 0.0;  // slope of log(-E) against log(sigma) over the last decade; bias O(1/sigma)
  double min_energy = 0.0;
  bool monotone_after_peak = false;
  double expected_exponent = 0.0;

  [[nodiscard]] bool certified(double bound = -1e6, double rel = 0.01) const {
    return min_energy < bound && monotone_after_peak &&
           std::abs(tail_exponent - expected_exponent) <= rel * expected_exponent;
  }
};

inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::log(x[i]), b = std::log(y[i]);
    sx += a;
    sy += b;
    sxx += a * a;
    sxy += a * b;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline UnboundedCurve unbounded_check(double c, const ModelParams& m, const GridPtr& grid, double sigma_max = 1e6,
                                      double grid_sigma_max = 4.0) {
  m.validate();
  const RealField base = gaussian_seed(grid, c, 1.0);
  UnboundedCurve out;
  out.expected_exponent = 0.5 * m.dim * (m.p - 1.0);

  std::vector<double> s, kin, quasi, pot;
  for (int i = 0; i <= 8; ++i) {
    const double sigma = std::pow(grid_sigma_max, i / 8.0);
    const RealField us = rescale(base, sigma);
    const Integrals I = integrals(us, m.p);
    s.push_back(sigma);
    kin.push_back(I.grad_sq);
    quasi.push_back(I.quasilinear);
    pot.push_back(I.power);
    out.grid_curve.emplace_back(sigma, formulas::energy(I, m.p));
  }
  out.kinetic_exponent = loglog_slope(s, kin);
  out.quasilinear_exponent = loglog_slope(s, quasi);
  out.potential_exponent = loglog_slope(s, pot);

  const ScalingLaw law{m.dim, m.p, integrals(base, m.p)};
  constexpr int n = 400;
  for (int i = 0; i <= n; ++i) {
    const double sigma = std::pow(sigma_max, static_cast<double>(i) / n);
    out.law_curve.emplace_back(sigma, law.energy(sigma));
  }
  std::size_t peak = 0;
  out.min_energy = out.law_curve[0].second;
  for (std::size_t i = 0; i < out.law_curve.size(); ++i) {
    if (out.law_curve[i].second > out.law_curve[peak].second) peak = i;
    out.min_energy = std::min(out.min_energy, out.law_curve[i].second);
  }
  out.monotone_after_peak = true;
  for (std::size_t i = peak + 1; i < out.law_curve.size(); ++i)
    if (!(out.law_curve[i].second < out.law_curve[i - 1].second)) out.monotone_after_peak = false;

  std::vector<double> ts, es;
  for (const auto& [sigma, e] : out.law_curve)
    if (sigma >= sigma_max / 10.0 && e < 0.0) {
      ts.push_back(sigma);
      es.push_back(-e);
    }
  out.tail_exponent = ts.size() >= 2 ? loglog_slope(ts, es) : std::nan("");
  return out;
}

// ---------------------------------------------------------------------------
// Critical mass for 1 + 4/N <= p < 3 + 4/N

struct CriticalMassResult {
  double c_hat = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::pair<double, double>> evaluations;  // (c, m(c))
};

inline CriticalMassResult critical_mass(const ModelParams& m, const GridPtr& grid, double c_lo, double c_hi,
                                        double tol_neg = 1e-8, double rel_width = 1e-3, MinimizeOptions opt = {}) {
  m.validate();
  require(m.p >= m.p_classical_critical() && m.p < m.p_quasilinear_critical(),
          "critical_mass needs 1 + 4/N <= p < 3 + 4/N");
  require(0.0 < c_lo && c_lo < c_hi, "critical_mass needs 0 < c_lo < c_hi");
  CriticalMassResult res;
  auto negative = [&](double c) {
    const double v = minimize_multistart(c, m, grid, {1.0, 2.5}, opt).m_c;
    res.evaluations.emplace_back(c, v);
    return v < -tol_neg;
  };
  const bool at_lo = negative(c_lo);
  const bool at_hi = negative(c_hi);
  if (at_lo || !at_hi) {
    throw PreconditionError("critical_mass bracket does not straddle the sign change: m(" + std::to_string(c_lo) +
                            ") = " + std::to_string(res.evaluations[0].second) + ", m(" + std::to_string(c_hi) +
                            ") = " + std::to_string(res.evaluations[1].second));
  }
  double lo = c_lo, hi = c_hi;
  while (hi - lo > rel_width * hi) {
    const double mid = 0.5 * (lo + hi);
    (negative(mid) ? hi : lo) = mid;
  }
  res.lo = lo;
  res.hi = hi;
  res.c_hat = 0.5 * (lo + hi);
  return res;
}

// ---------------------------------------------------------------------------
// Subadditivity m(lambda d) < lambda m(d)

struct SubadditivityResult {
  double m_d = 0.0;
  double dilated_energy = 0.0;  // E(v), v(x) = u_d(lambda^{-1/N} x)
  double dilated_mass = 0.0;
  double m_lambda_d = 0.0;
  double bound = 0.0;  // lambda m(d)
  [[nodiscard]] double margin() const { return bound - m_lambda_d; }
};

inline SubadditivityResult subadditivity_check(double d, double lambda, const ModelParams& m, const GridPtr& grid,
                                               const MinimizeOptions& opt = {}) {
  require(lambda >= 1.0, "subadditivity needs lambda >= 1");
  const MassMinimizer ud = minimize(d, m, grid, opt);
  if (!(ud.m_c < 0.0)) throw PreconditionError("subadditivity needs m(d) < 0 (got " + std::to_string(ud.m_c) + ")");
  SubadditivityResult r;
  r.m_d = ud.m_c;
  r.bound = lambda * ud.m_c;
  const double stretch = std::pow(lambda, -1.0 / m.dim);
  const RealField v = resample(ud.u, [stretch](double x) { return stretch * x; });
  r.dilated_mass = mass(v);
  r.dilated_energy = energy(v, m);
  r.m_lambda_d = lambda == 1.0 ? ud.m_c : std::min(minimize(lambda * d, m, grid, opt, v).m_c, r.dilated_energy);
  return r;
}

// ---------------------------------------------------------------------------
// Plateau probe w_R: 1 on |x| <= R, linear to 0 on [R, R+1]

struct NegativityProbe {
  std::vector<std::array<double, 3>> samples;  // (R, mass, E)
  std::optional<double> first_radius;
  std::optional<double> first_mass;  // upper bound for the critical mass
  double mass_exponent = 0.0;        // fitted over the largest radii
};

inline RealField plateau(const GridPtr& grid, double R) {
  return sample(grid, [R](double x) {
    const double r = std::abs(x);
    return r <= R ? 1.0 : (r <= R + 1.0 ? 1.0 + R - r : 0.0);
  });
}

inline NegativityProbe negativity_probe(const ModelParams& m, const GridPtr& grid, double R_min, double R_max,
                                        double dR) {
  m.validate();
  require(R_max + 1.0 < grid->extent(), "negativity_probe: grid extent must exceed R_max + 1");
  NegativityProbe out;
  for (double R = R_min; R <= R_max + 1e-12; R += dR) {
    const RealField w = plateau(grid, R);
    const double M = mass(w), E = energy(w, m);
    out.samples.push_back({R, M, E});
    if (!out.first_radius && E < 0.0) {
      out.first_radius = R;
      out.first_mass = M;
    }
  }
  std::vector<double> rs, ms;
  for (std::size_t i = out.samples.size() * 3 / 4; i < out.samples.size(); ++i) {
    rs.push_back(out.samples[i][0]);
    ms.push_back(out.samples[i][1]);
  }
  out.mass_exponent = loglog_slope(rs, ms);
  return out;
}

}  // namespace qsl
