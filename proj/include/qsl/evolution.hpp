#pragma once

// Time integration of  i phi_t = E'(phi),  E'(phi) = -Lap phi - phi Lap|phi|^2 - |phi|^{p-1} phi.
//
// semi_implicit_relaxation is the implicit midpoint rule: Crank-Nicolson on the
// Laplacian, both nonlinear terms at the midpoint psi = (phi^n + phi^{n+1})/2.
// The midpoint equation 2i(psi - phi^n) = dt E'(psi) is solved by Newton on
// (Re psi, Im psi) with a block-tridiagonal Jacobian. Discrete mass is
// conserved to the inner tolerance; energy to O(dt^2).

#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <future>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "qsl/error.hpp"
#include "qsl/field.hpp"
#include "qsl/field_io.hpp"
#include "qsl/functionals.hpp"
#include "qsl/ground_state.hpp"
#include "qsl/linalg.hpp"
#include "qsl/params.hpp"

namespace qsl {

enum class Scheme { semi_implicit_relaxation, explicit_rk4 };

inline std::string to_string(Scheme s) {
  return s == Scheme::explicit_rk4 ? "explicit_rk4" : "semi_implicit_relaxation";
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "semi_implicit_relaxation" || s == "cn") return Scheme::semi_implicit_relaxation;
  if (s == "explicit_rk4" || s == "rk4") return Scheme::explicit_rk4;
  throw PreconditionError("unknown scheme '" + s + "'");
}

struct EvolutionConfig {
  double dt = 1e-3;
  double T = 1.0;
  Scheme scheme = Scheme::semi_implicit_relaxation;
  double inner_tol = 1e-12;  // Newton update, relative to max |psi|
  int inner_max = 30;
  int snapshot_every = 10;
  double blowup_gradient_threshold = 1e3;  // growth factor of ||grad phi||_2
  double boundary_leak_tol = 1e-6;
  int max_halvings = 10;
  // Adaptive mode: reject steps whose relative sup-norm change exceeds
  // max_change, and let dt grow back towards `dt` when steps are easy.
  bool adaptive = false;
  double max_change = 0.05;
  double dt_min = 1e-14;
  // Called after every accepted step with (t, dt, ||grad phi||_2).
  std::function<void(double, double, double)> observer;

  void validate() const {
    require(dt > 0.0 && std::isfinite(dt), "dt must be > 0");
    require(T > 0.0 && std::isfinite(T), "T must be > 0");
    require(inner_tol > 0.0, "inner_tol must be > 0");
    require(inner_max >= 1, "inner_max must be >= 1");
    require(snapshot_every >= 1, "snapshot_every must be >= 1");
    require(blowup_gradient_threshold > 1.0, "blowup_gradient_threshold must be > 1");
    require(boundary_leak_tol > 0.0, "boundary_leak_tol must be > 0");
    require(max_halvings >= 0, "max_halvings must be >= 0");
    require(max_change > 0.0, "max_change must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const EvolutionConfig& c) {
  j = nlohmann::json{{"dt", c.dt},
                     {"T", c.T},
                     {"scheme", to_string(c.scheme)},
                     {"inner_tol", c.inner_tol},
                     {"inner_max", c.inner_max},
                     {"snapshot_every", c.snapshot_every},
                     {"blowup_gradient_threshold", c.blowup_gradient_threshold},
                     {"boundary_leak_tol", c.boundary_leak_tol},
                     {"max_halvings", c.max_halvings},
                     {"adaptive", c.adaptive},
                     {"max_change", c.max_change},
                     {"dt_min", c.dt_min}};
}

struct Outcome {
  enum class Kind { completed, blew_up, boundary_contaminated } kind = Kind::completed;
  double time = 0.0;

  [[nodiscard]] std::string describe() const {
    switch (kind) {
      case Kind::blew_up:
        return "blew_up(" + io::format_double(time) + ")";
      case Kind::boundary_contaminated:
        return "boundary_contaminated(" + io::format_double(time) + ")";
      default:
        return "completed";
    }
  }
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> mass;
  std::vector<double> energy;
  std::vector<double> V;
  std::vector<double> Vprime;
  std::vector<double> Q;
  std::vector<double> grad_norm;
  std::optional<std::vector<double>> orbit_distance;
  Outcome outcome;
  Field final_field;
  int steps = 0;
  int rejected = 0;
  double min_dt = 0.0;
  bool outside_proved_wellposedness = false;

  [[nodiscard]] std::size_t size() const { return times.size(); }

  [[nodiscard]] double mass_drift() const {
    double d = 0.0;
    for (double m : mass) d = std::max(d, std::abs(m - mass.front()));
    return d / std::abs(mass.front());
  }

  [[nodiscard]] double energy_drift() const {
    double d = 0.0;
    for (double e : energy) d = std::max(d, std::abs(e - energy.front()));
    return d / std::abs(energy.front());
  }

  [[nodiscard]] double sup_orbit_distance() const {
    if (!orbit_distance || orbit_distance->empty()) return std::nan("");
    return *std::max_element(orbit_distance->begin(), orbit_distance->end());
  }
};

inline void to_json(nlohmann::json& j, const TrajectoryRecord& r) {
  j = nlohmann::json{{"snapshots", r.size()},
                     {"steps", r.steps},
                     {"rejected_steps", r.rejected},
                     {"min_dt", r.min_dt},
                     {"outcome", r.outcome.describe()},
                     {"final_time", r.times.empty() ? 0.0 : r.times.back()},
                     {"mass_drift", r.mass_drift()},
                     {"energy_drift", r.energy_drift()},
                     {"outside_proved_wellposedness", r.outside_proved_wellposedness}};
  if (r.orbit_distance) j["sup_orbit_distance"] = r.sup_orbit_distance();
}

inline std::string trajectory_csv(const TrajectoryRecord& r) {
  std::string out = "t,mass,energy,V,Vprime,Q,grad_norm";
  if (r.orbit_distance) out += ",orbit_distance";
  out += '\n';
  for (std::size_t k = 0; k < r.size(); ++k) {
    out += io::format_double(r.times[k]) + ',' + io::format_double(r.mass[k]) + ',' + io::format_double(r.energy[k]) +
           ',' + io::format_double(r.V[k]) + ',' + io::format_double(r.Vprime[k]) + ',' +
           io::format_double(r.Q[k]) + ',' + io::format_double(r.grad_norm[k]);
    if (r.orbit_distance) out += ',' + io::format_double((*r.orbit_distance)[k]);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single steps

namespace detail {

/// Tridiagonal entries of the discrete Laplacian: (L f)_i = lo_i f_{i-1} + di_i f_i + up_i f_{i+1}.
struct LaplacianBands {
  std::vector<double> lo, di, up;
};

inline LaplacianBands laplacian_bands(const Grid& g) {
  const auto w = g.node_weights();
  const auto a = g.edge_weights();
  const double inv_h2 = 1.0 / (g.spacing() * g.spacing());
  const std::size_t n = g.size();
  LaplacianBands b{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    if (g.is_pinned(i)) continue;
    if (i < g.edge_count()) {
      const double k = a[i] * inv_h2 / w[i];
      b.di[i] -= k;
      if (i + 1 < n) b.up[i] = k;
    }
    if (i > 0) {
      const double k = a[i - 1] * inv_h2 / w[i];
      b.di[i] -= k;
      b.lo[i] = k;
    }
  }
  return b;
}

inline double sup_norm(std::span<const complex> v) {
  double m = 0.0;
  for (const complex& z : v) m = std::max(m, std::abs(z));
  return m;
}

}  // namespace detail

/// One implicit-midpoint step; throws NumericalError if Newton does not converge.
inline Field midpoint_step(const Field& phi, double dt, const ModelParams& m, const EvolutionConfig& cfg) {
  using linalg::Mat2;
  using linalg::Vec2;
  const Grid& g = phi.grid();
  const std::size_t n = phi.size();
  const auto bands = detail::laplacian_bands(g);
  const double q = 0.5 * (m.p - 1.0);
  Field psi = phi;
  for (int it = 0; it < cfg.inner_max; ++it) {
    const Field G = energy_gradient(psi, m.p);
    std::vector<double> rho(n);
    for (std::size_t i = 0; i < n; ++i) rho[i] = std::norm(psi[i]);
    const auto lap_rho = apply_laplacian<double>(g, rho);

    std::vector<Mat2> lower(n), diag(n), upper(n);
    std::vector<Vec2> rhs(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (g.is_pinned(i)) {
        diag[i] = {1.0, 0.0, 0.0, 1.0};
        continue;
      }
      const double a = psi[i].real(), b = psi[i].imag();
      // F = 2 i (psi - phi) - dt G(psi); i acts as J = [[0,-1],[1,0]].
      const complex F = 2.0 * complex(0.0, 1.0) * (psi[i] - phi[i]) - dt * G[i];
      rhs[i] = {-F.real(), -F.imag()};
      // dG_i/dpsi_i: -L_ii - Lap(rho)_i - rho^q - 2q rho^{q-1} psi psi^T - 2 L_ii psi psi^T
      const double s = rho[i] > 0.0 ? 2.0 * q * std::pow(rho[i], q - 1.0) : 0.0;
      const double c0 = -bands.di[i] - lap_rho[i] - std::pow(rho[i], q);
      const double c1 = -s - 2.0 * bands.di[i];
      const Mat2 dG{c0 + c1 * a * a, c1 * a * b, c1 * a * b, c0 + c1 * b * b};
      diag[i] = Mat2{0.0, -2.0, 2.0, 0.0} - Mat2{dt * dG.a, dt * dG.b, dt * dG.c, dt * dG.d};
      auto offdiag = [&](double L, std::size_t j) {
        if (j >= n || g.is_pinned(j)) return Mat2{};
        const double aj = psi[j].real(), bj = psi[j].imag();
        // dG_i/dpsi_j = -L_ij I - 2 L_ij psi_i psi_j^T
        const Mat2 d{-L - 2.0 * L * a * aj, -2.0 * L * a * bj, -2.0 * L * b * aj, -L - 2.0 * L * b * bj};
        return Mat2{-dt * d.a, -dt * d.b, -dt * d.c, -dt * d.d};
      };
      if (i > 0) lower[i] = offdiag(bands.lo[i], i - 1);
      upper[i] = offdiag(bands.up[i], i + 1);
    }
    const auto delta = linalg::solve_block_tridiagonal(lower, diag, upper, rhs);
    double dmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      psi[i] += complex(delta[i][0], delta[i][1]);
      dmax = std::max(dmax, std::hypot(delta[i][0], delta[i][1]));
    }
    if (!std::isfinite(dmax)) break;
    if (dmax <= cfg.inner_tol * std::max(1.0, detail::sup_norm(psi.values()))) {
      Field next = psi;
      for (std::size_t i = 0; i < n; ++i) next[i] = 2.0 * psi[i] - phi[i];
      return next;
    }
  }
  throw NumericalError("midpoint step: Newton did not converge in " + std::to_string(cfg.inner_max) +
                       " iterations (dt=" + io::format_double(dt) + ")");
}

/// Stability bound of classical RK4 on the imaginary axis.
inline constexpr double rk4_stability_limit = 2.8;

/// Gershgorin bound on the spectral radius of the linearised right-hand side.
inline double stencil_eigenvalue_estimate(const Field& phi, double p) {
  const auto bands = detail::laplacian_bands(phi.grid());
  double rho_max = 0.0;
  for (const complex& z : phi.values()) rho_max = std::max(rho_max, std::norm(z));
  double lmax = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i)
    lmax = std::max(lmax, std::abs(bands.lo[i]) + std::abs(bands.di[i]) + std::abs(bands.up[i]));
  return lmax * (1.0 + 4.0 * rho_max) + std::pow(rho_max, 0.5 * (p - 1.0)) * p;
}

inline Field rk4_step(const Field& phi, double dt, const ModelParams& m) {
  const complex mi(0.0, -1.0);
  auto rhs = [&](const Field& f) {
    Field k = energy_gradient(f, m.p);
    for (std::size_t i = 0; i < k.size(); ++i) k[i] *= mi;
    return k;
  };
  auto axpy = [](const Field& x, double a, const Field& k) {
    Field y = x;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * k[i];
    return y;
  };
  const Field k1 = rhs(phi);
  const Field k2 = rhs(axpy(phi, 0.5 * dt, k1));
  const Field k3 = rhs(axpy(phi, 0.5 * dt, k2));
  const Field k4 = rhs(axpy(phi, dt, k3));
  Field out = phi;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

/// One step of the configured scheme.
inline Field step(const Field& phi, double dt, const ModelParams& m, const EvolutionConfig& cfg) {
  if (cfg.scheme == Scheme::explicit_rk4) {
    const double lam = stencil_eigenvalue_estimate(phi, m.p);
    if (dt * lam > rk4_stability_limit)
      throw PreconditionError("explicit_rk4: dt=" + io::format_double(dt) + " exceeds the stability bound " +
                              io::format_double(rk4_stability_limit / lam));
    return rk4_step(phi, dt, m);
  }
  return midpoint_step(phi, dt, m, cfg);
}

// ---------------------------------------------------------------------------
// Orbit distance  inf_{theta, y} ||phi - e^{i theta} u(. - y)||_{H^1}

struct OrbitFit {
  double distance = 0.0;
  double theta = 0.0;
  double shift = 0.0;
};

inline OrbitFit orbit_fit(const Field& phi, const RealField& u) {
  require(phi.grid() == u.grid(), "orbit_distance: fields live on different grids");
  const double phi2 = std::real(h1_inner_complex(phi, phi));
  auto at = [&](double y) {
    const Field uy = to_complex(y == 0.0 ? u : translate(u, y));
    const complex z = h1_inner_complex(uy, phi);
    const double u2 = std::real(h1_inner_complex(uy, uy));
    return std::pair{std::sqrt(std::max(phi2 + u2 - 2.0 * std::abs(z), 0.0)), std::arg(z)};
  };
  if (!phi.grid().is_line()) {
    const auto [d, th] = at(0.0);
    return {d, th, 0.0};
  }
  // Coarse scan of whole-cell shifts around the centre of mass, then Brent.
  const Grid& g = phi.grid();
  const auto w = g.node_weights();
  const auto x = g.coords();
  double mx = 0.0, m0 = 0.0, ux = 0.0, u0 = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) {
    mx += w[i] * x[i] * std::norm(phi[i]);
    m0 += w[i] * std::norm(phi[i]);
    ux += w[i] * x[i] * u[i] * u[i];
    u0 += w[i] * u[i] * u[i];
  }
  const double h = g.spacing();
  const double centre = m0 > 0.0 && u0 > 0.0 ? std::round((mx / m0 - ux / u0) / h) * h : 0.0;
  double best_y = centre, best_d = at(centre).first;
  for (int k = -20; k <= 20; ++k) {
    const double y = centre + k * h;
    const double d = at(y).first;
    if (d < best_d) {
      best_d = d;
      best_y = y;
    }
  }
  const auto [y, d] =
      boost::math::tools::brent_find_minima([&](double s) { return at(s).first; }, best_y - h, best_y + h, 40);
  if (d < best_d) best_y = y;
  const auto [dist, th] = at(best_y);
  return {dist, th, best_y};
}

inline double orbit_distance(const Field& phi, const RealField& u) { return orbit_fit(phi, u).distance; }

/// Cubic interpolation of `f` onto the nodes of another grid of the same kind.
inline RealField transfer(const RealField& f, const GridPtr& to) {
  if (f.grid() == *to) return f;
  require(f.grid().kind() == to->kind() && f.grid().dim() == to->dim(), "transfer needs grids of the same kind");
  const CubicInterpolant ip(f.grid(), f.values());
  return sample(to, [&ip](double x) { return ip(x); });
}

// ---------------------------------------------------------------------------
// Trajectories

/// Evolves a0 to cfg.T (or blow-up / boundary contamination), recording diagnostics.
inline TrajectoryRecord evolve(const Field& a0, const ModelParams& m, const EvolutionConfig& cfg,
                               const RealField* orbit_profile = nullptr) {
  cfg.validate();
  m.validate();
  require(a0.grid().dim() == m.dim, "grid dimension does not match N");
  const double leak0 = boundary_amplitude(a0);
  if (leak0 > cfg.boundary_leak_tol)
    throw DomainError("initial data not decayed at the outer boundary: |phi| = " + io::format_double(leak0));

  TrajectoryRecord rec;
  if (orbit_profile) rec.orbit_distance.emplace();
  // Odd-integer p gives a polynomial nonlinearity; otherwise f is not smooth at 0.
  rec.outside_proved_wellposedness = std::abs(m.p - std::round(m.p)) > 0.0 || static_cast<long>(m.p) % 2 == 0;

  double grad0 = 0.0;
  auto record = [&](const Field& f, double t) {
    std::future<double> dist;
    if (orbit_profile) dist = std::async(std::launch::async, [&f, orbit_profile] { return orbit_distance(f, *orbit_profile); });
    const Integrals I = integrals(f, m.p);
    rec.times.push_back(t);
    rec.mass.push_back(I.mass);
    rec.energy.push_back(formulas::energy(I, m.p));
    rec.V.push_back(variance(f));
    rec.Vprime.push_back(variance_prime(f));
    rec.Q.push_back(formulas::virial_Q(I, m.dim, m.p));
    rec.grad_norm.push_back(std::sqrt(I.grad_sq));
    if (orbit_profile) rec.orbit_distance->push_back(dist.get());
    return std::sqrt(I.grad_sq);
  };

  Field phi = a0;
  double t = 0.0;
  grad0 = record(phi, 0.0);
  double dt = cfg.dt;
  rec.min_dt = dt;
  int since_snapshot = 0;
  int easy_steps = 0;
  while (t < cfg.T * (1.0 - 1e-12)) {
    const double h = std::min(dt, cfg.T - t);
    Field next;
    int halvings = 0;
    double trial = h;
    for (;;) {
      try {
        next = step(phi, trial, m, cfg);
        if (cfg.adaptive) {
          double change = 0.0;
          for (std::size_t i = 0; i < phi.size(); ++i) change = std::max(change, std::abs(next[i] - phi[i]));
          if (change > cfg.max_change * detail::sup_norm(phi.values()))
            throw NumericalError("adaptive step rejected");
        }
        break;
      } catch (const NumericalError& e) {
        ++rec.rejected;
        trial *= 0.5;
        if (!cfg.adaptive && ++halvings > cfg.max_halvings)
          throw NumericalError("step failed after " + std::to_string(cfg.max_halvings) +
                               " halvings at t=" + io::format_double(t) + ": " + e.what());
        if (trial < cfg.dt_min) {
          const double growth = std::sqrt(integrals(phi, m.p).grad_sq) / grad0;
          throw NumericalError("dt collapsed below " + io::format_double(cfg.dt_min) + " at t=" + io::format_double(t) +
                               " with gradient growth " + io::format_double(growth) + " (threshold " +
                               io::format_double(cfg.blowup_gradient_threshold) + ")");
        }
      }
    }
    phi = std::move(next);
    t += trial;
    ++rec.steps;
    rec.min_dt = std::min(rec.min_dt, trial);
    if (cfg.adaptive) {
      dt = std::min(trial * 1.25, cfg.dt);
    } else if (trial < h) {
      dt = trial;
      easy_steps = 0;
    } else if (dt < cfg.dt && ++easy_steps >= 10) {
      dt = std::min(2.0 * dt, cfg.dt);
      easy_steps = 0;
    }

    const double gnorm = std::sqrt(integrals(phi, m.p).grad_sq);
    if (!std::isfinite(gnorm)) throw NumericalError("non-finite field at t=" + io::format_double(t));
    if (cfg.observer) cfg.observer(t, trial, gnorm);
    const bool blew = gnorm > cfg.blowup_gradient_threshold * grad0;
    const bool leaked = boundary_amplitude(phi) > cfg.boundary_leak_tol;
    const bool done = t >= cfg.T * (1.0 - 1e-12);
    if (++since_snapshot >= cfg.snapshot_every || blew || leaked || done) {
      record(phi, t);
      since_snapshot = 0;
    }
    if (blew) {
      rec.outcome = {Outcome::Kind::blew_up, t};
      break;
    }
    if (leaked) {
      rec.outcome = {Outcome::Kind::boundary_contaminated, t};
      break;
    }
  }
  rec.final_field = std::move(phi);
  return rec;
}

// ---------------------------------------------------------------------------
// Trajectory analyses

/// Largest |V'' - 8Q| / |8Q| at interior snapshots, V'' by the three-point
/// formula on the recorded (possibly uneven) times; and the largest
/// |dV/dt - V'| relative to max |V'|.
struct VirialCheck {
  double max_rel_error = 0.0;
  double max_vprime_error = 0.0;
  std::size_t samples = 0;
};

inline VirialCheck virial_check(const TrajectoryRecord& r) {
  VirialCheck out;
  double vp_scale = 0.0;
  for (double v : r.Vprime) vp_scale = std::max(vp_scale, std::abs(v));
  for (std::size_t k = 1; k + 1 < r.size(); ++k) {
    const double h0 = r.times[k] - r.times[k - 1], h1 = r.times[k + 1] - r.times[k];
    const double d2 = 2.0 * ((r.V[k + 1] - r.V[k]) / h1 - (r.V[k] - r.V[k - 1]) / h0) / (h0 + h1);
    out.max_rel_error = std::max(out.max_rel_error, std::abs(d2 - 8.0 * r.Q[k]) / std::abs(8.0 * r.Q[k]));
    const double d1 = (r.V[k + 1] - r.V[k - 1]) / (h0 + h1) - (h1 - h0) * d2 / 2.0;
    if (vp_scale > 0.0) out.max_vprime_error = std::max(out.max_vprime_error, std::abs(d1 - r.Vprime[k]) / vp_scale);
    ++out.samples;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Instability by blow-up

struct InstabilityReport {
  TrajectoryRecord trajectory;
  double sigma = 0.0;
  double d_omega = 0.0;
  double E_omega0 = 0.0;
  double Q0 = 0.0;
  double I0 = 0.0;
  double rho0 = 0.0;  // d_omega - E_omega(a0)
  double V0 = 0.0;
  double Vprime0 = 0.0;
  double t_root = 0.0;  // positive root of V0 + V'0 t - 4 rho0 t^2
  double max_Q_excess = 0.0;  // max over resolved samples of Q + rho0, relative to rho0
  double max_V_excess = 0.0;  // max of (V - bound)/V0
  double blowup_time = std::nan("");
  double gradient_growth = 0.0;
  double resolved_until = 0.0;

  [[nodiscard]] bool signs_strict() const { return E_omega0 < d_omega && Q0 < 0.0 && I0 < 0.0; }
};

inline void to_json(nlohmann::json& j, const InstabilityReport& r) {
  j = nlohmann::json{{"sigma", r.sigma},       {"d_omega", r.d_omega},      {"E_omega0", r.E_omega0},
                     {"Q0", r.Q0},             {"I0", r.I0},                {"rho0", r.rho0},
                     {"V0", r.V0},             {"Vprime0", r.Vprime0},      {"t_root", r.t_root},
                     {"max_Q_excess", r.max_Q_excess}, {"max_V_excess", r.max_V_excess},
                     {"blowup_time", r.blowup_time},   {"gradient_growth", r.gradient_growth},
                     {"resolved_until", r.resolved_until},
                     {"signs_strict", r.signs_strict()}, {"trajectory", r.trajectory}};
}

/// Default configuration for blow-up runs: adaptive implicit midpoint.
inline EvolutionConfig blowup_config(double T = 40.0) {
  EvolutionConfig c;
  c.dt = 2e-3;
  c.T = T;
  c.adaptive = true;
  c.max_change = 0.02;
  c.snapshot_every = 20;
  c.inner_max = 40;
  return c;
}

inline constexpr double resolved_energy_tol = 1e-2;

/// Grid on which the default blow-up run reaches the gradient threshold.
inline GridPtr blowup_grid() { return Grid::line(1e-3, 20.0); }

inline InstabilityReport instability_run(const ModelParams& m, double sigma, const GridPtr& grid,
                                         const EvolutionConfig& cfg, double gs_grid_h = 0.01) {
  require(m.p > m.p_quasilinear_critical(), "instability_run needs p > 3 + 4/N");
  require(sigma > 1.0, "instability_run needs sigma > 1");
  const double omega = m.frequency();
  const GroundState gs = solve_ground_state(m, Grid::make(grid->kind(), m.dim, gs_grid_h, grid->extent()));
  InstabilityReport r;
  r.sigma = sigma;
  const RealField u_on = transfer(gs.u, grid);
  r.d_omega = action_omega(u_on, m);
  const RealField a0 = rescale(u_on, sigma);
  const Integrals I = integrals(a0, m.p);
  r.E_omega0 = formulas::action(I, m.p, omega);
  r.Q0 = formulas::virial_Q(I, m.dim, m.p);
  r.I0 = formulas::nehari_I(I, m.p, omega);
  r.rho0 = r.d_omega - r.E_omega0;
  if (!r.signs_strict())
    throw PreconditionError("sigma=" + io::format_double(sigma) + " does not give strict signs: E_omega - d_omega=" +
                            io::format_double(r.E_omega0 - r.d_omega) + ", Q=" + io::format_double(r.Q0) +
                            ", I=" + io::format_double(r.I0));
  r.V0 = variance(a0);
  r.Vprime0 = 0.0;
  r.t_root = (r.Vprime0 + std::sqrt(r.Vprime0 * r.Vprime0 + 16.0 * r.rho0 * r.V0)) / (8.0 * r.rho0);

  r.trajectory = evolve(to_complex(a0), m, cfg);
  const TrajectoryRecord& tr = r.trajectory;
  const double grad0 = tr.grad_norm.front();
  r.max_Q_excess = -std::numeric_limits<double>::infinity();
  r.max_V_excess = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < tr.size(); ++k) {
    // Resolved: the discrete energy is still conserved to `resolved_energy_tol`.
    if (std::abs(tr.energy[k] - tr.energy.front()) > resolved_energy_tol * std::abs(tr.energy.front())) break;
    r.resolved_until = tr.times[k];
    r.max_Q_excess = std::max(r.max_Q_excess, (tr.Q[k] + r.rho0) / r.rho0);
    const double t = tr.times[k];
    const double bound = r.V0 + r.Vprime0 * t - 4.0 * r.rho0 * t * t;
    r.max_V_excess = std::max(r.max_V_excess, (tr.V[k] - bound) / r.V0);
  }
  r.gradient_growth = tr.grad_norm.back() / grad0;
  if (tr.outcome.kind == Outcome::Kind::blew_up) r.blowup_time = tr.outcome.time;
  return r;
}

// ---------------------------------------------------------------------------
// Orbital stability

/// Fixed perturbation profile: an off-centre Gaussian with a linear phase.
inline Field stability_bump(const GridPtr& grid) {
  Field b(grid, std::vector<complex>(grid->size()));
  const auto x = grid->coords();
  for (std::size_t i = 0; i < b.size(); ++i)
    if (!grid->is_pinned(i)) b[i] = std::exp(-2.0 * (x[i] - 0.5) * (x[i] - 0.5)) * complex(1.0, 0.5 * x[i]);
  return b;
}

/// Default configuration for stability runs. Outgoing radiation of size
/// O(delta) reaches the boundary well before T, hence the looser leak tolerance.
inline EvolutionConfig stability_config(double T = 20.0) {
  EvolutionConfig c;
  c.dt = 1e-2;
  c.T = T;
  c.snapshot_every = 10;
  c.boundary_leak_tol = 1e-3;
  return c;
}

/// Evolves u + delta b / ||b||_{H^1} and records the orbit distance to u.
inline TrajectoryRecord stability_run(const RealField& u, const ModelParams& m, double delta, const EvolutionConfig& cfg) {
  require(delta > 0.0, "perturbation size must be > 0");
  const Field b = stability_bump(u.grid_ptr());
  const double nb = h1_norm(b);
  Field a0 = to_complex(u);
  for (std::size_t i = 0; i < a0.size(); ++i) a0[i] += delta / nb * b[i];
  return evolve(a0, m, cfg, &u);
}

}  // namespace qsl
