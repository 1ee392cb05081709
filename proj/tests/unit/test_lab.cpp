#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qsl/lab.hpp"

using namespace qsl;
using namespace qsl::lab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qsl_lab_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config(text, "case.ini");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

// Clears QSL_OUTPUT_DIR for the lifetime of a test.
struct NoEnvOverride {
  NoEnvOverride() { unsetenv("QSL_OUTPUT_DIR"); }
};

}  // namespace

TEST(Config, ParsesSectionsAndEchoesDefaults) {
  const ScenarioConfig c = parse_config(
      "scenario = evolve\nseed = 7\n[model]\nN = 1\np = 5\nomega = 2\n[grid]\nh = 0.05\nextent = 12\n"
      "[evolution]\ndt = 0.002\nT = 0.1\nscheme = cn\n[initial]\nkind = gaussian\nwidth = 0.8\n");
  EXPECT_EQ(c.scenario, Scenario::evolve);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.params.p, 5.0);
  EXPECT_EQ(*c.params.omega, 2.0);
  EXPECT_EQ(c.h, 0.05);
  EXPECT_EQ(c.evolution.dt, 0.002);
  EXPECT_EQ(c.initial.width, 0.8);
  const nlohmann::json j = to_json(c);
  EXPECT_EQ(j["grid"]["kind"], "line");
  EXPECT_EQ(j["evolution"]["inner_tol"], 1e-12);
  EXPECT_EQ(j["initial"]["amplitude"], 1.2);
}

TEST(Config, DiagnosticsNameLineAndField) {
  EXPECT_NE(config_error("scenario = ground_state\n[model]\nq = 3\n").find("case.ini:3: field 'model.q'"),
            std::string::npos);
  EXPECT_NE(config_error("scenario = ground_state\n[model]\np = three\n").find("case.ini:3: field 'model.p'"),
            std::string::npos);
  EXPECT_NE(config_error("scenario = teleport\n").find("case.ini:1: field 'scenario'"), std::string::npos);
  EXPECT_NE(config_error("[model]\np = 3\n").find("missing required key 'scenario'"), std::string::npos);
  EXPECT_NE(config_error("scenario = ground_state\n[grid]\nkind = torus\n").find("case.ini:3"), std::string::npos);
  EXPECT_NE(config_error("scenario = ground_state\n[model\n").find("case.ini:2"), std::string::npos);
  EXPECT_NE(config_error("scenario = sweep\n").find("non-empty axis"), std::string::npos);
  EXPECT_NE(config_error("scenario = critical_mass\n[critical_mass]\nc_lo = 3\nc_hi = 2\n").find("c_lo"),
            std::string::npos);
  EXPECT_NE(config_error("scenario = ground_state\n[model]\nN = 1.5\n").find("integer"), std::string::npos);
}

TEST(Run, GroundStateWritesCertifiedReport) {
  NoEnvOverride guard;
  ScenarioConfig c = with_scenario_defaults(Scenario::ground_state);
  c.output_dir = scratch("gs").string();
  const Report rep = run(c);
  EXPECT_EQ(rep.exit, ExitCode::ok);
  const auto j = nlohmann::json::parse(slurp(fs::path(c.output_dir) / "report.json"));
  EXPECT_TRUE(j["certified"].get<bool>());
  EXPECT_LE(j["certificate"]["rel_P"].get<double>(), 1e-3);
  EXPECT_LE(j["certificate"]["rel_Q"].get<double>(), 1e-3);
  EXPECT_LE(j["certificate"]["rel_I_omega"].get<double>(), 1e-3);
  EXPECT_EQ(j["exit_code"], 0);
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "profile.csv"));
}

TEST(Run, ExitCodesSeparateFailureKinds) {
  NoEnvOverride guard;
  ScenarioConfig cert = with_scenario_defaults(Scenario::ground_state);
  cert.certify_tol = 1e-9;
  cert.output_dir = scratch("cert").string();
  EXPECT_EQ(run(cert).exit, ExitCode::certification);

  ScenarioConfig num = with_scenario_defaults(Scenario::evolve);
  num.h = 0.05;
  num.evolution.T = 0.01;
  num.evolution.inner_max = 1;
  num.output_dir = scratch("num").string();
  EXPECT_EQ(run(num).exit, ExitCode::numerical);

  ScenarioConfig pre = with_scenario_defaults(Scenario::blowup);
  pre.sigma = 0.95;
  pre.h = 0.05;
  pre.output_dir = scratch("pre").string();
  std::string error;
  EXPECT_EQ(run(pre, &error).exit, ExitCode::usage);
  EXPECT_FALSE(error.empty());
}

TEST(Run, IdenticalConfigsGiveIdenticalFiles) {
  NoEnvOverride guard;
  ScenarioConfig c = with_scenario_defaults(Scenario::evolve);
  c.h = 0.05;
  c.evolution.T = 0.05;
  c.snapshots = true;
  c.output_dir = scratch("det_a").string();
  run(c);
  const std::string a = c.output_dir;
  c.output_dir = scratch("det_b").string();
  run(c);
  for (const char* name : {"report.json", "trajectory.csv", "final_field.csv"})
    EXPECT_EQ(slurp(fs::path(a) / name), slurp(fs::path(c.output_dir) / name)) << name;
}

TEST(Run, EnvironmentOverridesOutputDir) {
  const fs::path dir = scratch("env");
  setenv("QSL_OUTPUT_DIR", dir.c_str(), 1);
  ScenarioConfig c = with_scenario_defaults(Scenario::ground_state);
  c.output_dir = scratch("ignored").string();
  run(c);
  unsetenv("QSL_OUTPUT_DIR");
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_FALSE(fs::exists(fs::path(c.output_dir) / "report.json"));
}

TEST(Sweep, CriticalMassIncreasesWithPower) {
  NoEnvOverride guard;
  ScenarioConfig c = with_scenario_defaults(Scenario::sweep);
  c.sweep.p = {5.0, 5.5, 6.0};
  c.output_dir = scratch("sweep_mono").string();
  const Report rep = run(c);
  ASSERT_EQ(rep.exit, ExitCode::ok);
  std::istringstream table(rep.primary_csv());
  std::string line;
  std::getline(table, line);
  EXPECT_EQ(line, "N,p,c_hat,c_lo,c_hi,status");
  double previous = 0.0;
  int rows = 0;
  while (std::getline(table, line)) {
    const auto parts = io::split(line, ',');
    const double c_hat = io::parse_double(parts[2], "c_hat");
    EXPECT_GT(c_hat, previous);
    previous = c_hat;
    ++rows;
  }
  EXPECT_EQ(rows, 3);
}

TEST(Sweep, ParallelMatchesSerial) {
  NoEnvOverride guard;
  ScenarioConfig c = with_scenario_defaults(Scenario::sweep);
  c.sweep.inner = Scenario::ground_state;
  c.sweep.N = {1, 3};
  c.sweep.p = {3.0, 5.0};
  c.sweep.omega = {1.0, 2.0};
  c.output_dir = scratch("sweep_serial").string();
  const Report serial = run(c);
  c.sweep.workers = 4;
  c.output_dir = scratch("sweep_parallel").string();
  const Report parallel = run(c);
  EXPECT_EQ(serial.primary_csv(), parallel.primary_csv());
  EXPECT_EQ(slurp(fs::path(c.output_dir) / "sweep.csv"), serial.primary_csv());
}

TEST(Sweep, FailedCellsAreReportedInPlace) {
  NoEnvOverride guard;
  ScenarioConfig c = with_scenario_defaults(Scenario::sweep);
  c.sweep.p = {5.0, 8.0};  // 8 is above the quasilinear critical power for N = 1
  c.output_dir = scratch("sweep_fail").string();
  const Report rep = run(c);
  EXPECT_EQ(rep.exit, ExitCode::numerical);
  EXPECT_EQ(rep.summary["failed_cells"], 1);
  EXPECT_NE(rep.primary_csv().find("1,8,,,,error: "), std::string::npos);
}

TEST(Verify, AllRowsPassOnCleanBuild) {
  const VerifyMatrix m = verify_suite();
  for (const auto& r : m.rows) EXPECT_TRUE(r.passed) << r.key << " value " << r.value << " " << r.note;
  EXPECT_NO_THROW(m.row("virial"));
  EXPECT_NO_THROW(m.row("rescaling-derivative"));
  EXPECT_NO_THROW(m.row("subadditivity"));
}

TEST(Verify, SignBugInQFailsTheVirialRows) {
  VerifyOptions opt;
  opt.virial_q = [](const Integrals& I, int dim, double p) {
    return I.grad_sq + (dim + 2.0) * I.quasilinear + dim * (p - 1.0) / (2.0 * (p + 1.0)) * I.power;
  };
  const VerifyMatrix m = verify_suite(opt);
  EXPECT_FALSE(m.all_passed());
  EXPECT_FALSE(m.row("virial").passed);
  EXPECT_FALSE(m.row("rescaling-derivative").passed);
  EXPECT_FALSE(m.row("virial-Q/N1-p3-w1").passed);
  EXPECT_TRUE(m.row("dual-round-trip").passed);
  EXPECT_TRUE(m.row("pohozaev/N1-p3-w1").passed);
}

#ifdef QSL_LAB_BINARY
TEST(Cli, MalformedConfigExitsWithOne) {
  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.ini") << "scenario = ground_state\n[model]\np = 3\nfrequency = 1\n";
  const std::string cmd =
      std::string(QSL_LAB_BINARY) + " run --config " + (dir / "bad.ini").string() + " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 1);
  EXPECT_NE(slurp(dir / "err.txt").find("bad.ini:4: field 'model.frequency'"), std::string::npos);
}

TEST(Cli, UnknownFlagExitsWithOne) {
  const int status = std::system((std::string(QSL_LAB_BINARY) + " ground-state --bogus 2> /dev/null").c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 1);
}

TEST(Cli, GroundStateSucceeds) {
  const fs::path dir = scratch("cli_gs");
  const std::string cmd = std::string(QSL_LAB_BINARY) + " ground-state --N 1 --p 3 --omega 1 --out-dir " +
                          dir.string() + " --out " + (dir / "u.csv").string() + " > /dev/null";
  unsetenv("QSL_OUTPUT_DIR");
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), 0);
  EXPECT_TRUE(fs::exists(dir / "u.csv"));
}
#endif
