#pragma once

// Ground states of  -Lap u - u Lap(u^2) + omega u = |u|^{p-1} u.
//
// N = 1: the first integral  u'^2 (1 + 2u^2) = omega u^2 - 2u^{p+1}/(p+1)
// is integrated exactly. Writing u = u0 exp(-s^2) removes the square-root
// singularity at the peak and leaves the regular problem
//
//   s' = 1/2 sqrt(omega q(s) / (1 + 2 u^2)),  q(s) = (1 - e^{-(p-1)s^2}) / s^2,  s(0) = 0.
//
// N >= 2: shooting on the semilinear dual equation v'' + (N-1)/r v' + k(v) = 0
// with u = r(v), matched to the Bessel tail r^{-nu} K_nu(sqrt(omega) r).

#include <algorithm>
#include <boost/math/special_functions/bessel.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "qsl/dual.hpp"
#include "qsl/error.hpp"
#include "qsl/field.hpp"
#include "qsl/functionals.hpp"
#include "qsl/params.hpp"

namespace qsl {

inline constexpr double default_certify_tol = 1e-3;

struct Certificate {
  double P = 0.0;
  double Q = 0.0;
  double I_omega = 0.0;
  double E_omega = 0.0;
  double pohozaev_rhs = 0.0;  // (1/N) int |grad u|^2 + 2 u^2 |grad u|^2
  double scale = 0.0;         // largest constituent integral
  double decay_rate = 0.0;
  double residual = 0.0;      // weighted L2 norm of the stationary residual
  double tolerance = default_certify_tol;

  [[nodiscard]] double rel_P() const { return std::abs(P) / scale; }
  [[nodiscard]] double rel_Q() const { return std::abs(Q) / scale; }
  [[nodiscard]] double rel_I() const { return std::abs(I_omega) / scale; }
  [[nodiscard]] double rel_action() const { return std::abs(E_omega - pohozaev_rhs) / std::abs(E_omega); }

  [[nodiscard]] std::vector<std::string> failures() const {
    std::vector<std::string> out;
    if (!(rel_P() <= tolerance)) out.push_back("P");
    if (!(rel_Q() <= tolerance)) out.push_back("Q");
    if (!(rel_I() <= tolerance)) out.push_back("I_omega");
    if (!(rel_action() <= tolerance)) out.push_back("action identity");
    if (!(decay_rate > 0.0)) out.push_back("decay");
    return out;
  }
  [[nodiscard]] bool passed() const { return failures().empty(); }
};

inline void to_json(nlohmann::json& j, const Certificate& c) {
  j = nlohmann::json{{"P", c.P},
                     {"Q", c.Q},
                     {"I_omega", c.I_omega},
                     {"E_omega", c.E_omega},
                     {"m_omega", c.E_omega},
                     {"pohozaev_rhs", c.pohozaev_rhs},
                     {"scale", c.scale},
                     {"rel_P", c.rel_P()},
                     {"rel_Q", c.rel_Q()},
                     {"rel_I_omega", c.rel_I()},
                     {"rel_action_identity", c.rel_action()},
                     {"decay_rate_fit", c.decay_rate},
                     {"residual", c.residual},
                     {"tolerance", c.tolerance},
                     {"passed", c.passed()}};
}

struct GroundState {
  RealField u;
  RealField v;
  ModelParams params;
  Certificate certificate;
  double amplitude = 0.0;  // u at the centre
  double shooting_v0 = 0.0;
  double match_radius = 0.0;
};

// ---------------------------------------------------------------------------
// Diagnostics

/// Least-squares slope of -log u on the tail window u in [lo, hi]. On radial
/// grids the algebraic prefactor is removed first: log(r^{(N-1)/2} u).
template <FieldScalar T>
double decay_fit(const BasicField<T>& f, double lo = 1e-8, double hi = 1e-3) {
  const Grid& g = f.grid();
  const auto x = g.coords();
  const std::size_t centre = g.is_line() ? g.size() / 2 : 0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = centre; i < g.size(); ++i) {
    const double a = std::abs(f[i]);
    if (g.is_pinned(i) || a < lo || a > hi) continue;
    const double r = std::abs(x[i]);
    const double y = std::log(a) + (g.is_line() ? 0.0 : 0.5 * (g.dim() - 1) * std::log(r));
    sx += r;
    sy += y;
    sxx += r * r;
    sxy += r * y;
    ++n;
  }
  if (n < 3) throw DomainError("decay fit: tail window is empty (domain too small)");
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -slope;
}

inline double decay_fit(const GroundState& gs) { return decay_fit(gs.u); }

template <FieldScalar T>
double residual_norm(const BasicField<T>& u, double p, double omega) {
  const auto r = stationary_residual(u, p, omega);
  return l2_norm(r);
}

inline Certificate certify(const RealField& u, const ModelParams& m, double tol = default_certify_tol) {
  const double omega = m.frequency();
  const Integrals I = integrals(u, m.p);
  Certificate c;
  c.tolerance = tol;
  c.P = formulas::pohozaev_P(I, m.dim, m.p, omega);
  c.Q = formulas::virial_Q(I, m.dim, m.p);
  c.I_omega = formulas::nehari_I(I, m.p, omega);
  c.E_omega = formulas::action(I, m.p, omega);
  c.pohozaev_rhs = formulas::pohozaev_action(I, m.dim);
  c.scale = std::max({I.grad_sq, I.quasilinear, I.power, omega * I.mass});
  c.decay_rate = decay_fit(u);
  c.residual = residual_norm(u, m.p, omega);
  return c;
}

// ---------------------------------------------------------------------------
// Solvers

namespace detail {

using State2 = std::array<double, 2>;

/// Dual peak: the positive root of K(v) = 0.
inline double dual_peak(double p, double omega) {
  auto K = [&](double v) { return dual::K(v, p, omega); };
  double lo = dual::mu(std::pow(omega, 1.0 / (p - 1.0)));  // K < 0 here
  double hi = 2.0 * lo + 1.0;
  for (int i = 0; K(hi) <= 0.0; ++i) {
    if (i > 200) throw NumericalError("dual peak: no sign change of K");
    hi *= 2.0;
  }
  boost::uintmax_t it = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(K, lo, hi, boost::math::tools::eps_tolerance<double>(52), it);
  return 0.5 * (a + b);
}

/// s(x) on the sorted nonnegative abscissae `xs` for the N = 1 profile.
inline std::vector<double> profile_exponent(const std::vector<double>& xs, double p, double omega, double u0) {
  using namespace boost::numeric::odeint;
  auto rhs = [=](const std::vector<double>& y, std::vector<double>& dy, double) {
    const double s = y[0];
    const double s2 = s * s;
    const double q = s2 < 1e-300 ? p - 1.0 : -std::expm1(-(p - 1.0) * s2) / s2;
    const double u = u0 * std::exp(-s2);
    dy[0] = 0.5 * std::sqrt(omega * q / (1.0 + 2.0 * u * u));
  };
  std::vector<double> out;
  out.reserve(xs.size());
  std::vector<double> y{0.0};
  auto stepper = make_controlled(1e-13, 1e-13, runge_kutta_dopri5<std::vector<double>>());
  integrate_times(stepper, rhs, y, xs.begin(), xs.end(), 1e-3,
                  [&](const std::vector<double>& state, double) { out.push_back(state[0]); });
  return out;
}

enum class Shot { overshoot, undershoot, escaped };

struct ShotResult {
  Shot kind = Shot::escaped;
  std::vector<double> v;  // samples at the requested radii, stopped at classification
};

/// Integrates v'' + (N-1)/r v' + k(v) = 0 from the series start and samples
/// it at the increasing radii `rs` (rs[0] may be 0).
inline ShotResult shoot(double v0, int dim, double p, double omega, const std::vector<double>& rs, bool record) {
  using namespace boost::numeric::odeint;
  constexpr double r0 = 1e-4;
  const double k0 = dual::k(v0, p, omega);
  State2 y{v0 - k0 * r0 * r0 / (2.0 * dim), -k0 * r0 / dim};
  auto rhs = [=](const State2& s, State2& ds, double r) {
    ds[0] = s[1];
    ds[1] = -(dim - 1.0) / r * s[1] - dual::k(s[0], p, omega);
  };
  auto stepper = make_dense_output(1e-12, 1e-12, runge_kutta_dopri5<State2>());
  stepper.initialize(y, r0, 1e-4);
  ShotResult res;
  std::size_t next = 0;
  if (record) {
    while (next < rs.size() && rs[next] <= r0) {
      res.v.push_back(v0 - k0 * rs[next] * rs[next] / (2.0 * dim));
      ++next;
    }
  }
  const double r_end = rs.empty() ? 50.0 : rs.back();
  while (stepper.current_time() < r_end) {
    stepper.do_step(rhs);
    const State2& s = stepper.current_state();
    if (record) {
      State2 tmp;
      while (next < rs.size() && rs[next] <= stepper.current_time()) {
        stepper.calc_state(rs[next], tmp);
        res.v.push_back(tmp[0]);
        ++next;
      }
    }
    if (s[0] < 0.0) {
      res.kind = Shot::overshoot;
      return res;
    }
    if (s[1] > 0.0) {
      res.kind = Shot::undershoot;
      return res;
    }
  }
  return res;
}

}  // namespace detail

/// N = 1 ground state on a line grid or on a radial grid with N = 1.
inline GroundState solve_1d(const ModelParams& m, const GridPtr& grid) {
  m.validate();
  require(m.dim == 1 && grid->dim() == 1, "solve_1d needs N = 1");
  const double omega = m.frequency();
  const double v_max = detail::dual_peak(m.p, omega);
  const double u0 = dual::r(v_max);

  const auto x = grid->coords();
  std::vector<double> xs;
  for (double xi : x)
    if (xi >= 0.0) xs.push_back(xi);
  if (xs.front() != 0.0) xs.insert(xs.begin(), 0.0);
  const std::vector<double> s = detail::profile_exponent(xs, m.p, omega, u0);

  std::vector<double> u(grid->size());
  const double h = grid->spacing();
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (grid->is_pinned(i)) continue;
    const auto j = static_cast<std::size_t>(std::lround(std::abs(x[i]) / h));
    u[i] = u0 * std::exp(-s[j] * s[j]);
  }
  GroundState gs;
  gs.params = m;
  gs.amplitude = u0;
  gs.shooting_v0 = v_max;
  gs.u = RealField(grid, std::move(u), Parity::even);
  gs.v = dual::map_mu(gs.u);
  return gs;
}

/// Radial ground state for N >= 2 by shooting on v(0).
inline GroundState solve_radial(const ModelParams& m, const GridPtr& grid) {
  m.validate();
  require(m.dim >= 2, "solve_radial needs N >= 2");
  require(grid->kind() == GridKind::radial && grid->dim() == m.dim, "solve_radial needs a radial grid of the same N");
  const double omega = m.frequency();
  const double p = m.p;
  const int N = m.dim;
  const std::vector<double> rs(grid->coords().begin(), grid->coords().end());

  // Scan upward from the zero of k until the first overshoot.
  const double v_star = dual::mu(std::pow(omega, 1.0 / (p - 1.0)));
  double lo = v_star;
  double hi = v_star * 1.2;
  const std::vector<double> none;
  for (int i = 0;; ++i) {
    if (i > 200 || hi > 1e12) throw NumericalError("no overshoot found: increase initial-amplitude search range");
    const auto kind = detail::shoot(hi, N, p, omega, none, false).kind;
    if (kind == detail::Shot::overshoot) break;
    if (kind == detail::Shot::escaped) throw DomainError("shot neither crossed zero nor turned back up: increase R");
    lo = hi;
    hi *= 1.25;
  }
  for (int it = 0; it < 200 && hi - lo > 2e-16 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto kind = detail::shoot(mid, N, p, omega, none, false).kind;
    if (kind == detail::Shot::overshoot)
      hi = mid;
    else
      lo = mid;
  }

  const auto below = detail::shoot(lo, N, p, omega, rs, true);
  const auto above = detail::shoot(hi, N, p, omega, rs, true);
  const std::size_t n = std::min(below.v.size(), above.v.size());

  // Trust the shots while they agree and the profile is above the tail level.
  constexpr double tail_level = 1e-6;
  std::size_t match = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const double a = below.v[i], b = above.v[i];
    if (std::abs(a - b) > 1e-3 * std::abs(a) || 0.5 * (a + b) < tail_level || b > above.v[i - 1]) break;
    match = i;
  }
  if (match < 4) throw NumericalError("shooting did not resolve the profile core");
  const double r_match = rs[match];
  const double nu = 0.5 * (N - 2.0);
  const double kappa = std::sqrt(omega);
  auto tail = [&](double r) { return std::pow(r, -nu) * boost::math::cyl_bessel_k(nu, kappa * r); };
  const double v_match = 0.5 * (below.v[match] + above.v[match]);
  const double amp = v_match / tail(r_match);

  std::vector<double> v(rs.size());
  for (std::size_t i = 0; i < rs.size(); ++i) v[i] = i <= match ? 0.5 * (below.v[i] + above.v[i]) : amp * tail(rs[i]);

  GroundState gs;
  gs.params = m;
  gs.shooting_v0 = 0.5 * (lo + hi);
  gs.match_radius = r_match;
  gs.v = RealField(grid, std::move(v), Parity::even);
  gs.u = dual::map_r(gs.v);
  gs.amplitude = gs.u[0];
  return gs;
}

inline GridPtr default_ground_state_grid(int dim, double h = 0.02, double R = 30.0) {
  return dim == 1 ? Grid::line(h, R) : Grid::radial(dim, h, R);
}

/// Solves and certifies. Throws CertificationError when a check fails and
/// `strict` is set.
inline GroundState solve_ground_state(const ModelParams& m, const GridPtr& grid, double tol = default_certify_tol,
                                      bool strict = false) {
  GroundState gs = m.dim == 1 ? solve_1d(m, grid) : solve_radial(m, grid);
  check_boundary(gs.u, 1e-6, "ground state");
  gs.certificate = certify(gs.u, m, tol);
  if (strict && !gs.certificate.passed()) {
    std::string msg = "ground-state certificate violated:";
    for (const auto& f : gs.certificate.failures()) msg += " " + f;
    throw CertificationError(msg);
  }
  return gs;
}

// ---------------------------------------------------------------------------
// Rescaling psi^sigma(x) = sigma^{N/2} psi(sigma x)

template <FieldScalar T>
BasicField<T> rescale(const BasicField<T>& psi, double sigma) {
  require(std::isfinite(sigma) && sigma > 0.0, "rescale needs sigma > 0");
  const double amp = std::pow(sigma, 0.5 * psi.grid().dim());
  return resample(psi, [sigma](double x) { return sigma * x; }, amp);
}

/// Root sigma0 of sigma -> Q(psi^sigma), from the exact scaling law of the
/// discrete integrals. Q(psi) must be nonpositive up to `tol` times the
/// largest constituent.
template <FieldScalar T>
double find_sigma0(const BasicField<T>& psi, const ModelParams& m, double tol = default_certify_tol) {
  require(m.p > m.p_quasilinear_critical(), "find_sigma0 needs p > 3 + 4/N");
  const ScalingLaw law{m.dim, m.p, integrals(psi, m.p)};
  const double scale = std::max({law.base.grad_sq, law.base.quasilinear, law.base.power});
  const double q1 = law.virial(1.0);
  if (q1 > tol * scale) throw PreconditionError("find_sigma0 needs Q(psi) <= 0 (got Q = " + std::to_string(q1) + ")");
  if (q1 == 0.0) return 1.0;
  // Q(sigma)/sigma^2 is strictly decreasing: positive near 0, negative at infinity.
  auto f = [&](double s) { return law.virial(s) / (s * s); };
  double lo = 1.0, hi = 1.0;
  if (q1 < 0.0) {
    while (f(lo) <= 0.0) lo *= 0.5;
  } else {
    while (f(hi) >= 0.0) hi *= 2.0;
  }
  boost::uintmax_t it = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(f, lo, hi, boost::math::tools::eps_tolerance<double>(50), it);
  return 0.5 * (a + b);
}

}  // namespace qsl
