#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rfrk/harness.hpp"
#include "rfrk/stability.hpp"
#include "rfrk/tableau.hpp"

namespace {

namespace h = rfrk::harness;

enum Exit { kOk = 0, kConfigError = 1, kIntegrationFailure = 2, kCheckFailure = 3 };

// Flags shared by `run` and `stability`; unset ones do not override the file.
struct RunFlags {
  std::string config;
  std::optional<std::string> experiment, scheme, mode, k, out, eps;
  std::optional<std::string> dt, mu, cfl, t_end, seed, points, record_every;

  h::ConfigEntries overrides() const {
    h::ConfigEntries e;
    auto put = [&e](const char* key, const std::optional<std::string>& v) {
      if (v) e[key] = *v;
    };
    put("experiment", experiment);
    put("scheme", scheme);
    put("mode", mode);
    put("k", k);
    put("out", out);
    put("eps", eps);
    put("dt", dt);
    put("mu", mu);
    put("cfl", cfl);
    put("t_end", t_end);
    put("seed", seed);
    put("points", points);
    put("record_every", record_every);
    return e;
  }

  h::ExperimentConfig build() const {
    h::ConfigEntries base;
    if (!config.empty()) base = h::read_config_file(config);
    return h::make_config(h::merge_entries(base, overrides()));
  }
};

void add_run_flags(CLI::App* app, RunFlags& f, bool with_steps) {
  app->add_option("--config", f.config, "key = value config file; flags override it")
      ->check(CLI::ExistingFile);
  app->add_option("--scheme", f.scheme, "SSPRK22, SSPRK33, RK44 or BSRK85");
  app->add_option("--k", f.k, "k-vector override, comma separated");
  app->add_option("--out", f.out, "output directory");
  app->add_option("--points", f.points, "grid points or region samples per axis");
  if (!with_steps) return;
  app->add_option("--experiment", f.experiment,
                  "advection-noise, advection-smooth, dissipative, oscillator, burgers");
  app->add_option("--mode", f.mode, "classical, idt, r or rf");
  auto* dt = app->add_option("--dt", f.dt, "step size");
  auto* mu = app->add_option("--mu", f.mu, "fraction of the advection stability limit");
  auto* cfl = app->add_option("--cfl", f.cfl, "CFL number for burgers");
  dt->excludes(mu)->excludes(cfl);
  mu->excludes(cfl);
  app->add_option("--t-end", f.t_end, "final time");
  app->add_option("--seed", f.seed, "white-noise seed");
  app->add_option("--record-every", f.record_every, "time-series stride");
}

int cmd_run(const RunFlags& flags) {
  const auto cfg = flags.build();
  const auto s = h::run(cfg);
  h::write_summary(std::cout, s);
  if (s.failure) {
    std::cerr << "integration failed at step " << s.failure->step << " (t = "
              << h::fmt17(s.failure->time) << "): " << s.failure->reason << '\n';
    return kIntegrationFailure;
  }
  return kOk;
}

int cmd_stability(RunFlags flags) {
  flags.experiment = "stability-regions";
  const auto cfg = flags.build();
  const auto s = h::run(cfg);
  std::ifstream limits(cfg.output / "limits.csv");
  std::cout << limits.rdbuf();
  return s.failure ? kIntegrationFailure : kOk;
}

int cmd_reproduce(const std::string& target, const std::string& out, const std::string& report) {
  const auto r = h::reproduce(target, out);
  h::write_report(std::cout, r);
  if (!report.empty()) {
    std::ofstream file(report);
    if (!file) throw rfrk::Error("cannot write " + report);
    h::write_report(file, r);
  }
  return r.passed() ? kOk : kCheckFailure;
}

int cmd_converge(const std::string& problem, const std::vector<std::string>& schemes,
                 const std::string& mode, const std::vector<double>& steps,
                 std::optional<double> t_end, const std::string& out) {
  rfrk::Method method;
  try {
    method = rfrk::parse_method(mode);
  } catch (const std::invalid_argument& e) {
    throw h::ConfigError(e.what());
  }
  for (const auto& s : schemes) {
    try {
      rfrk::builtin_tableau(s);
    } catch (const rfrk::UnknownSchemeError& e) {
      throw h::ConfigError(e.what());
    }
  }
  const auto table = h::convergence_table(problem, schemes, method, steps, t_end);
  std::filesystem::create_directories(out);
  {
    std::ofstream csv(std::filesystem::path(out) / "convergence.csv");
    h::write_convergence_csv(csv, table);
  }
  {
    std::ofstream csv(std::filesystem::path(out) / "slopes.csv");
    h::write_slopes_csv(csv, table);
  }
  h::write_slopes_csv(std::cout, table);
  for (const auto& [scheme, slope] : table.slopes) {
    if (!slope) return kIntegrationFailure;
  }
  return kOk;
}

int cmd_list_schemes() {
  std::printf("%-8s %6s %5s  %s\n", "name", "stages", "order", "default k");
  for (const auto& name : rfrk::builtin_scheme_names()) {
    const auto t = rfrk::builtin_tableau(name);
    const auto k = rfrk::default_k(name);
    std::ostringstream ks;
    for (Eigen::Index i = 0; i < k.size(); ++i) ks << (i ? "," : "") << k(i);
    std::printf("%-8s %6d %5d  %s\n", name.c_str(), t.stages(), t.order(), ks.str().c_str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-controlling explicit Runge-Kutta experiments"};
  app.require_subcommand(1);

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "run one experiment");
  add_run_flags(run, run_flags, true);

  RunFlags stab_flags;
  auto* stability = app.add_subcommand("stability", "stability-region grids and axis limits");
  add_run_flags(stability, stab_flags, false);
  stability->add_option("--eps", stab_flags.eps, "epsilon list, comma separated");

  std::string target, repro_out = "reproduce", report;
  auto* repro = app.add_subcommand("reproduce", "run a target and check it against its goldens");
  repro->add_option("target", target, "table1, fig1, fig2-5, fig6 .. fig10 or all")
      ->required()
      ->check(CLI::IsMember(h::reproduce_targets()));
  repro->add_option("--out", repro_out, "output directory");
  repro->add_option("--report", report, "also write the report to this file");

  std::string problem = "oscillator", mode = "classical", conv_out = "convergence";
  std::vector<std::string> schemes = {"RK44"};
  std::vector<double> steps;
  std::optional<double> conv_t_end;
  auto* conv = app.add_subcommand("converge", "convergence table and fitted slopes");
  conv->add_option("--problem", problem, "oscillator or burgers");
  conv->add_option("--scheme", schemes, "one or more schemes")->delimiter(',');
  conv->add_option("--mode", mode, "classical, idt, r or rf");
  conv->add_option("--steps", steps, "dts (oscillator) or CFLs (burgers)")->delimiter(',');
  conv->add_option("--t-end", conv_t_end, "final time");
  conv->add_option("--out", conv_out, "output directory");

  auto* list = app.add_subcommand("list-schemes", "built-in tableaus and their k-vectors");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*stability) return cmd_stability(stab_flags);
    if (*repro) return cmd_reproduce(target, repro_out, report);
    if (*conv) return cmd_converge(problem, schemes, mode, steps, conv_t_end, conv_out);
    if (*list) return cmd_list_schemes();
  } catch (const h::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const rfrk::IntegrationError& e) {
    std::cerr << "integration failed: " << e.what() << '\n';
    return kIntegrationFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return kOk;
}
