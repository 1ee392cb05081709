// qsl_lab: command-line front end for the quasilinear Schrodinger lab.
//
//   qsl_lab ground-state --N 1 --p 3 --omega 1
//   qsl_lab run --config scenario.ini
//   qsl_lab verify
//
// Every scenario writes report.json plus CSV series into the output directory
// (QSL_OUTPUT_DIR overrides --out-dir) and prints the report on stdout.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>

#include "qsl/lab.hpp"

namespace {

using namespace qsl;
using namespace qsl::lab;

struct Flags {
  std::optional<int> N;
  std::optional<double> p, omega, c, h, R, dt, T, max_change, threshold, leak_tol;
  std::optional<std::string> grid, scheme, initial;
  std::optional<double> amplitude, width, shift, velocity;
  std::optional<double> c_lo, c_hi, tol_neg, certify_tol, delta, sigma;
  std::optional<int> snapshot_every;
  bool adaptive = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir, out, report;
  bool snapshots = false;
  std::string format = "json";
  std::string inner = "critical_mass";
  std::vector<int> Ns;
  std::vector<double> ps, cs, omegas;
  int workers = 1;
  std::string config;
};

template <class T>
void set_if(const std::optional<T>& v, T& out) {
  if (v) out = *v;
}

ScenarioConfig from_flags(Scenario s, const Flags& f) {
  ScenarioConfig c = with_scenario_defaults(s);
  set_if(f.N, c.params.dim);
  set_if(f.p, c.params.p);
  if (f.omega) c.params.omega = *f.omega;
  if (f.c) c.params.mass = *f.c;
  // A frequency and a mass are alternatives; an explicit one replaces the default other.
  if (f.omega && !f.c) c.params.mass.reset();
  if (f.c && !f.omega) c.params.omega.reset();
  if (f.grid) c.grid_kind = grid_kind_from_string(*f.grid);
  set_if(f.h, c.h);
  set_if(f.R, c.extent);
  set_if(f.dt, c.evolution.dt);
  set_if(f.T, c.evolution.T);
  if (f.scheme) c.evolution.scheme = scheme_from_string(*f.scheme);
  set_if(f.snapshot_every, c.evolution.snapshot_every);
  set_if(f.max_change, c.evolution.max_change);
  set_if(f.threshold, c.evolution.blowup_gradient_threshold);
  set_if(f.leak_tol, c.evolution.boundary_leak_tol);
  if (f.adaptive) c.evolution.adaptive = true;
  set_if(f.initial, c.initial.kind);
  set_if(f.amplitude, c.initial.amplitude);
  set_if(f.width, c.initial.width);
  set_if(f.shift, c.initial.shift);
  set_if(f.velocity, c.initial.velocity);
  set_if(f.c_lo, c.c_lo);
  set_if(f.c_hi, c.c_hi);
  set_if(f.tol_neg, c.tol_neg);
  set_if(f.certify_tol, c.certify_tol);
  set_if(f.delta, c.delta);
  set_if(f.sigma, c.sigma);
  set_if(f.seed, c.seed);
  set_if(f.out_dir, c.output_dir);
  c.snapshots = f.snapshots;
  if (s == Scenario::sweep) {
    c.sweep.inner = scenario_from_string(f.inner);
    c.sweep.N = f.Ns;
    c.sweep.p = f.ps;
    c.sweep.c = f.cs;
    c.sweep.omega = f.omegas;
    c.sweep.workers = f.workers;
    if (f.Ns.empty() && f.ps.empty() && f.cs.empty() && f.omegas.empty())
      throw ConfigError("sweep needs at least one of --Ns, --ps, --cs, --omegas");
  }
  c.params.validate();
  c.evolution.validate();
  return c;
}

void add_model_flags(CLI::App* app, Flags& f) {
  app->add_option("--N", f.N, "spatial dimension");
  app->add_option("--p", f.p, "power of the focusing nonlinearity");
  app->add_option("--omega", f.omega, "frequency of the standing wave");
  app->add_option("--c", f.c, "mass constraint");
  app->add_option("--grid", f.grid, "line | radial")->check(CLI::IsMember({"line", "radial"}));
  app->add_option("--h", f.h, "grid spacing");
  app->add_option("--R", f.R, "half-width (line) or outer radius (radial)");
  app->add_option("--certify-tol", f.certify_tol, "relative tolerance of the ground-state certificate");
}

void add_evolution_flags(CLI::App* app, Flags& f) {
  app->add_option("--dt", f.dt, "time step");
  app->add_option("--T", f.T, "final time");
  app->add_option("--scheme", f.scheme, "cn | rk4");
  app->add_option("--snapshot-every", f.snapshot_every, "steps between recorded samples");
  app->add_flag("--adaptive", f.adaptive, "reject steps whose relative change exceeds --max-change");
  app->add_option("--max-change", f.max_change, "step-size control bound");
  app->add_option("--blowup-threshold", f.threshold, "gradient growth factor that counts as blow-up");
  app->add_option("--leak-tol", f.leak_tol, "boundary amplitude that flags contamination");
}

void add_output_flags(CLI::App* app, Flags& f) {
  app->add_option("--seed", f.seed, "random seed");
  app->add_option("--out-dir", f.out_dir, "output directory (QSL_OUTPUT_DIR overrides)");
  app->add_option("--out", f.out, "copy the primary CSV series to this path");
  app->add_option("--report", f.report, "copy report.json to this path");
  app->add_flag("--snapshots", f.snapshots, "write field snapshots");
  app->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));
}

void copy_to(const std::string& dir, const std::string& name, const std::optional<std::string>& target) {
  if (!target || name.empty()) return;
  std::filesystem::copy_file(std::filesystem::path(dir) / name, *target,
                             std::filesystem::copy_options::overwrite_existing);
}

int emit(const ScenarioConfig& cfg, const Flags& f) {
  std::string error;
  const Report rep = run(cfg, &error);
  const std::string dir = output_dir(cfg);
  copy_to(dir, "report.json", f.report);
  copy_to(dir, rep.primary_csv_name, f.out);
  if (f.format == "csv")
    std::cout << rep.primary_csv();
  else
    std::cout << rep.summary.dump(2) << '\n';
  if (!error.empty()) std::cerr << "qsl_lab: " << error << '\n';
  return static_cast<int>(rep.exit);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quasilinear Schrodinger lab: ground states, constrained minimisers and time evolution"};
  app.set_help_flag("--help", "print this help and exit");
  app.require_subcommand(1);
  Flags f;

  struct Sub {
    const char* name;
    Scenario scenario;
    const char* help;
    bool evolution;
  };
  const std::vector<Sub> subs{
      {"ground-state", Scenario::ground_state, "solve and certify a ground state", false},
      {"mass-min", Scenario::mass_min, "minimise the energy at fixed mass --c", false},
      {"critical-mass", Scenario::critical_mass, "bisect for the critical mass in [--clo, --chi]", false},
      {"evolve", Scenario::evolve, "evolve Gaussian or ground-state data", true},
      {"stability-run", Scenario::stability, "perturb a minimiser or ground state and track its orbit distance", true},
      {"blowup-run", Scenario::blowup, "rescale the ground state by --sigma and evolve to collapse", true},
      {"virial-check", Scenario::virial_check, "compare V'' with 8Q along an evolution", true},
      {"sweep", Scenario::sweep, "run a scenario over a parameter grid", false},
  };
  std::vector<std::pair<CLI::App*, Scenario>> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_model_flags(sub, f);
    add_output_flags(sub, f);
    if (s.evolution) add_evolution_flags(sub, f);
    apps.emplace_back(sub, s.scenario);
    switch (s.scenario) {
      case Scenario::critical_mass:
        sub->add_option("--clo", f.c_lo, "lower end of the mass bracket");
        sub->add_option("--chi", f.c_hi, "upper end of the mass bracket");
        sub->add_option("--tol-neg", f.tol_neg, "level below which m(c) counts as negative");
        break;
      case Scenario::evolve:
      case Scenario::virial_check:
        sub->add_option("--initial", f.initial, "gaussian | ground_state")
            ->check(CLI::IsMember({"gaussian", "ground_state"}));
        sub->add_option("--amplitude", f.amplitude, "Gaussian amplitude");
        sub->add_option("--width", f.width, "Gaussian width");
        sub->add_option("--shift", f.shift, "Gaussian centre");
        sub->add_option("--velocity", f.velocity, "phase gradient");
        break;
      case Scenario::stability:
        sub->add_option("--delta", f.delta, "H1 size of the perturbation");
        break;
      case Scenario::blowup:
        sub->add_option("--sigma", f.sigma, "rescaling factor, > 1");
        break;
      case Scenario::sweep:
        sub->add_option("--scenario", f.inner, "critical_mass | ground_state | mass_min")
            ->check(CLI::IsMember({"critical_mass", "ground_state", "mass_min"}));
        sub->add_option("--Ns", f.Ns, "dimensions")->delimiter(',');
        sub->add_option("--ps", f.ps, "powers")->delimiter(',');
        sub->add_option("--cs", f.cs, "masses")->delimiter(',');
        sub->add_option("--omegas", f.omegas, "frequencies")->delimiter(',');
        sub->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--clo", f.c_lo, "lower end of the mass bracket");
        sub->add_option("--chi", f.c_hi, "upper end of the mass bracket");
        break;
      default:
        break;
    }
  }

  CLI::App* run_cmd = app.add_subcommand("run", "run a scenario described by an INI file");
  run_cmd->add_option("--config", f.config, "scenario file")->required();
  run_cmd->add_option("--out", f.out, "copy the primary CSV series to this path");
  run_cmd->add_option("--report", f.report, "copy report.json to this path");
  run_cmd->add_option("--format", f.format, "stdout format")->check(CLI::IsMember({"json", "csv"}));

  CLI::App* verify_cmd = app.add_subcommand("verify", "run the identity battery and print a pass/fail matrix");
  double verify_h = 0.02;
  verify_cmd->add_option("--h", verify_h, "grid spacing");
  verify_cmd->add_option("--seed", f.seed, "seed of the random gradient directions");
  verify_cmd->add_option("--format", f.format, "output format")->check(CLI::IsMember({"json", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::usage);
  }

  try {
    if (*verify_cmd) {
      VerifyOptions opt;
      opt.h = verify_h;
      opt.seed = f.seed.value_or(0);
      const VerifyMatrix m = verify_suite(opt);
      if (f.format == "csv") {
        std::cout << verify_csv(m);
      } else {
        std::cout << verify_table(m);
        std::cout << (m.all_passed() ? "all identities hold\n" : "identity violated\n");
      }
      return static_cast<int>(m.all_passed() ? ExitCode::ok : ExitCode::certification);
    }
    if (*run_cmd) return emit(load_config(f.config), f);
    for (const auto& [sub, scenario] : apps)
      if (*sub) return emit(from_flags(scenario, f), f);
  } catch (const ConfigError& e) {
    std::cerr << "qsl_lab: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  } catch (const PreconditionError& e) {
    std::cerr << "qsl_lab: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "qsl_lab: " << e.what() << '\n';
    return static_cast<int>(ExitCode::usage);
  } catch (const NumericalError& e) {
    std::cerr << "qsl_lab: " << e.what() << '\n';
    return static_cast<int>(ExitCode::numerical);
  } catch (const Error& e) {
    std::cerr << "qsl_lab: " << e.what() << '\n';
    return static_cast<int>(ExitCode::certification);
  }
  return static_cast<int>(ExitCode::usage);
}
