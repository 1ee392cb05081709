// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.
//
// Exit status is 0 once every criterion has been evaluated, whatever the
// verdicts; --strict makes any FAIL a nonzero exit.

#include <boost/numeric/odeint.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "qsl/qsl.hpp"

using namespace qsl;

namespace {

namespace tol {
constexpr double round_trip = 1e-10;
constexpr double mu_ode = 1e-9;
constexpr double certificate = 1e-3;
constexpr double amplitude = 1e-6;
constexpr double decay = 0.05;
constexpr double rescaling = 1e-4;
constexpr double sigma0 = 1e-4;
constexpr double mass_drift = 1e-8;
constexpr double energy_drift = 1e-5;
constexpr double halving_ratio = 4.0;
constexpr double virial = 0.02;
constexpr double blowup_growth = 1e3;
constexpr double blowup_time = 1.2;
constexpr double variance_bound = 0.05;
constexpr double orbit = 5.0;  // in units of delta
constexpr double nehari = 1e-3;
constexpr double unbounded_level = -1e6;
constexpr double exponent = 0.01;
constexpr double gradient = 1e-6;
}  // namespace tol

namespace budget {
constexpr double c1 = 1.0, c2 = 30.0, c4 = 120.0, c5 = 120.0, c6 = 300.0, c7 = 600.0, c8 = 600.0;
}  // namespace budget

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const char* fmt, double value) {
    char buf[160];
    std::snprintf(buf, sizeof buf, fmt, value);
    if (!detail.empty()) detail += "; ";
    detail += buf;
    if (!ok) {
      detail += " [x]";
      pass = false;
    }
  }
};

int failures = 0;
int evaluated = 0;

void criterion(int id, const char* name, double budget_s, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail += std::string(v.detail.empty() ? "" : "; ") + "threw: " + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (budget_s > 0.0) v.check(secs < budget_s, "runtime %.1f s", secs);
  ++evaluated;
  if (!v.pass) ++failures;
  std::printf("%s  %2d  %-26s %s\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str());
  std::fflush(stdout);
}

double max_rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

// 1 ---------------------------------------------------------------------------
void check_dual_round_trip(Verdict& v) {
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double s = -10.0 + 20.0 * i / 999.0;
    worst = std::max(worst, std::abs(dual::mu(dual::r(s)) - s));
  }
  v.check(worst <= tol::round_trip, "max|mu(r(s))-s| = %.2e", worst);

  // Independent oracle: integrate mu' = sqrt(1 + 2 s^2) from mu(0) = 0.
  using namespace boost::numeric::odeint;
  std::vector<double> y{0.0};
  double ode_err = 0.0;
  auto rhs = [](const std::vector<double>&, std::vector<double>& dy, double s) { dy[0] = std::sqrt(1.0 + 2.0 * s * s); };
  std::vector<double> grid;
  for (int i = 0; i <= 50; ++i) grid.push_back(0.1 * i);
  integrate_times(make_dense_output(1e-14, 1e-14, runge_kutta_dopri5<std::vector<double>>()), rhs, y, grid.begin(),
                  grid.end(), 1e-3, [&](const std::vector<double>& state, double s) {
                    ode_err = std::max(ode_err, std::abs(state[0] - dual::mu(s)));
                  });
  v.check(ode_err <= tol::mu_ode, "max|mu - ODE| on [0,5] = %.2e", ode_err);
}

// 2 ---------------------------------------------------------------------------
void check_ground_state_certificates(Verdict& v) {
  struct Case {
    int N;
    double p, omega;
  };
  double worst_identity = 0.0, worst_action = 0.0, worst_amp = 0.0, worst_decay = 0.0;
  for (const Case c : {Case{1, 3, 1}, Case{1, 3, 4}, Case{1, 9, 1}, Case{1, 9, 4}, Case{3, 5, 1}}) {
    const auto m = ModelParams::with_omega(c.N, c.p, c.omega);
    const GroundState gs = solve_ground_state(m, default_ground_state_grid(c.N, 0.02, 30.0));
    const Certificate& k = gs.certificate;
    worst_identity = std::max({worst_identity, k.rel_P(), k.rel_Q(), k.rel_I()});
    worst_action = std::max(worst_action, k.rel_action());
    worst_decay = std::max(worst_decay, max_rel(k.decay_rate, std::sqrt(c.omega)));
    if (c.N == 1)
      worst_amp = std::max(worst_amp, std::abs(gs.amplitude - std::pow((c.p + 1.0) * c.omega / 2.0, 1.0 / (c.p - 1.0))));
  }
  v.check(worst_identity <= tol::certificate, "max |P|,|Q|,|I|/scale = %.2e", worst_identity);
  v.check(worst_action <= tol::certificate, "action identity %.2e", worst_action);
  v.check(worst_amp <= tol::amplitude, "amplitude err %.2e", worst_amp);
  v.check(worst_decay <= tol::decay, "decay err %.2e", worst_decay);
}

// 3 ---------------------------------------------------------------------------
void check_rescaling(Verdict& v) {
  const auto m = ModelParams::with_omega(1, 9.0, 1.0);
  const GroundState gs = solve_ground_state(m, Grid::line(0.01, 40.0));
  double worst = 0.0;
  const double d = 1e-3;
  for (double s : {0.5, 0.8, 1.3, 2.0}) {
    const double fd = (action_omega(rescale(gs.u, s + d), m) - action_omega(rescale(gs.u, s - d), m)) / (2.0 * d);
    const double q = virial_Q(rescale(gs.u, s), m) / s;
    worst = std::max(worst, std::abs(fd - q) / std::abs(q));
  }
  v.check(worst <= tol::rescaling, "max rel |dE/dsigma - Q/sigma| = %.2e", worst);
  const double s0 = find_sigma0(gs.u, m);
  v.check(std::abs(s0 - 1.0) <= tol::sigma0, "|sigma0 - 1| = %.2e", std::abs(s0 - 1.0));
}

// 4 ---------------------------------------------------------------------------
void check_conservation(Verdict& v) {
  const auto m = ModelParams::with_omega(1, 9.0, 1.0);
  const GroundState gs = solve_ground_state(m, Grid::line(0.02, 30.0));
  EvolutionConfig c;
  c.T = 1.0;
  c.dt = 1e-3;
  const TrajectoryRecord full = evolve(to_complex(gs.u), m, c);
  c.dt = 5e-4;
  const TrajectoryRecord half = evolve(to_complex(gs.u), m, c);
  v.check(full.mass_drift() <= tol::mass_drift, "mass drift %.2e", full.mass_drift());
  v.check(full.energy_drift() <= tol::energy_drift, "energy drift %.2e", full.energy_drift());
  const double ratio = full.energy_drift() / half.energy_drift();
  v.check(ratio >= tol::halving_ratio, "halving ratio %.4f (>= 4 required)", ratio);
}

// 5 ---------------------------------------------------------------------------
void check_virial(Verdict& v) {
  const auto m = ModelParams{1, 5.0, std::nullopt, std::nullopt};
  const auto g = Grid::line(0.01, 30.0);
  const Field a0 = sample(g, [](double x) { return complex(1.2 * std::exp(-x * x / 2.0), 0.0); });
  EvolutionConfig c;
  c.dt = 1e-3;
  c.T = 0.5;
  c.snapshot_every = 10;
  const VirialCheck r = virial_check(evolve(a0, m, c));
  v.check(r.max_rel_error <= tol::virial, "max |V'' - 8Q|/|8Q| = %.2e", r.max_rel_error);
  v.check(r.samples > 0, "%g interior samples", static_cast<double>(r.samples));
}

// 6 ---------------------------------------------------------------------------
void check_blowup(Verdict& v) {
  const auto m = ModelParams::with_omega(1, 9.0, 1.0);
  const InstabilityReport r = instability_run(m, 1.05, blowup_grid(), blowup_config());
  v.check(r.signs_strict(), "signs strict (rho0 = %.3e)", r.rho0);
  v.check(r.max_Q_excess <= 0.0, "max Q + rho0 = %.2e", r.max_Q_excess);
  v.check(r.max_V_excess <= tol::variance_bound, "variance bound excess %.2e", r.max_V_excess);
  const bool blew = r.trajectory.outcome.kind == Outcome::Kind::blew_up;
  v.check(blew && r.gradient_growth >= tol::blowup_growth, "gradient growth %.0fx", r.gradient_growth);
  v.check(blew && r.blowup_time <= tol::blowup_time * r.t_root, "t* / t_root = %.3f", r.blowup_time / r.t_root);

  // Step-size refinement of the collapse time.
  EvolutionConfig fine = blowup_config();
  fine.dt = 1e-3;
  fine.max_change = 0.01;
  const InstabilityReport rf = instability_run(m, 1.05, blowup_grid(), fine);
  v.check(max_rel(r.blowup_time, rf.blowup_time) <= 0.01, "t* shift under refinement %.1e",
          max_rel(r.blowup_time, rf.blowup_time));
}

// 7 ---------------------------------------------------------------------------
void check_stability(Verdict& v) {
  const double delta = 1e-2;
  const auto g = Grid::line(0.02, 40.0);
  const auto stable = ModelParams::with_mass(1, 2.0, 1.0);
  const MassMinimizer mc = minimize(1.0, stable, g);
  v.check(mc.m_c < 0.0, "m(1) = %.4f at p = 2", mc.m_c);
  const TrajectoryRecord a = stability_run(mc.u, stable, delta, stability_config());
  v.check(a.outcome.kind == Outcome::Kind::completed && a.sup_orbit_distance() <= tol::orbit * delta,
          "p=2 sup dist / delta = %.3f", a.sup_orbit_distance() / delta);
  const auto unstable = ModelParams::with_omega(1, 9.0, 1.0);
  const GroundState gs = solve_ground_state(unstable, g);
  const TrajectoryRecord b = stability_run(gs.u, unstable, delta, stability_config());
  v.check(b.sup_orbit_distance() > tol::orbit * delta, "p=9 sup dist / delta = %.3g", b.sup_orbit_distance() / delta);
}

// 8 ---------------------------------------------------------------------------
void check_mass_constrained(Verdict& v) {
  const auto g = Grid::line(0.02, 30.0);
  double worst = -1e300;
  for (double c : {0.5, 1.0, 2.0}) worst = std::max(worst, minimize(c, ModelParams::with_mass(1, 2.0, c), g).m_c);
  v.check(worst < 0.0, "p=2 max m(c) = %.4f", worst);

  const ModelParams m5{1, 5.0, std::nullopt, std::nullopt};
  const CriticalMassResult cm = critical_mass(m5, g, 0.5, 10.0);
  const double below = minimize(cm.lo, ModelParams::with_mass(1, 5.0, cm.lo), g).m_c;
  v.check(below >= -1e-8, "m(c_lo) = %.1e", below);
  double prev = minimize(cm.hi, ModelParams::with_mass(1, 5.0, cm.hi), g).m_c;
  bool decreasing = prev < 0.0;
  for (double f : {1.2, 1.5, 2.0}) {
    const double mc = minimize(f * cm.c_hat, ModelParams::with_mass(1, 5.0, f * cm.c_hat), g).m_c;
    decreasing = decreasing && mc < prev;
    prev = mc;
  }
  v.check(decreasing, "c_hat = %.4f, m < 0 and decreasing at 1.2, 1.5, 2 c_hat", cm.c_hat);

  const auto m2 = ModelParams::with_mass(1, 2.0, 1.0);
  const SubadditivityResult s = subadditivity_check(1.0, 2.0, m2, g);
  v.check(s.m_lambda_d < s.bound, "m(2) - 2m(1) = %.4f", s.m_lambda_d - s.bound);

  const MassMinimizer u = minimize(1.0, m2, g);
  v.check(u.lambda_c < 0.0, "lambda_c = %.4f", u.lambda_c);
  const Integrals I = integrals(u.u, 2.0);
  const double nehari = std::abs(formulas::nehari_I(I, 2.0, -u.lambda_c)) / std::max({I.grad_sq, I.quasilinear, I.power});
  v.check(nehari <= tol::nehari, "|I_{-lambda}(u_c)|/scale = %.1e", nehari);
  v.check(u.residual <= tol::nehari, "constrained residual %.1e", u.residual);
}

// 9 ---------------------------------------------------------------------------
void check_unbounded(Verdict& v) {
  const UnboundedCurve u = unbounded_check(1.0, ModelParams::with_mass(1, 9.0, 1.0), Grid::line(0.005, 20.0));
  v.check(u.min_energy < tol::unbounded_level, "min E(u^sigma) = %.2e", u.min_energy);
  v.check(u.monotone_after_peak, "decreasing after peak (%g)", u.monotone_after_peak ? 1.0 : 0.0);
  v.check(max_rel(u.tail_exponent, 4.0) <= tol::exponent, "tail exponent %.4f", u.tail_exponent);
}

// 10 --------------------------------------------------------------------------
void check_gradient(Verdict& v) {
  const auto g = Grid::line(0.02, 20.0);
  const Field phi = sample(g, [](double x) { return std::exp(-x * x / 2.0) * complex(1.0, 0.3 * x); });
  const lab::GradientCheck r = lab::gradient_check(phi, 5.0, 20, 0);
  v.check(r.max_rel_error <= tol::gradient, "max rel err over 20 directions %.2e", r.max_rel_error);
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::strcmp(argv[1], "--strict") == 0;
  criterion(1, "dual round trip", budget::c1, check_dual_round_trip);
  criterion(2, "ground-state certificate", budget::c2, check_ground_state_certificates);
  criterion(3, "rescaling derivative", 0.0, check_rescaling);
  criterion(4, "conservation", budget::c4, check_conservation);
  criterion(5, "virial identity", budget::c5, check_virial);
  criterion(6, "blow-up", budget::c6, check_blowup);
  criterion(7, "stability contrast", budget::c7, check_stability);
  criterion(8, "mass-constrained", budget::c8, check_mass_constrained);
  criterion(9, "unboundedness", 0.0, check_unbounded);
  criterion(10, "gradient", 0.0, check_gradient);
  std::printf("criteria evaluated: %d, failed: %d\n", evaluated, failures);
  return strict && failures > 0 ? 1 : 0;
}
