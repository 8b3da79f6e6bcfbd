#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rfrk/error.hpp"
#include "rfrk/integrators.hpp"
#include "rfrk/types.hpp"

namespace rfrk::harness {

/// Invalid or inconsistent experiment configuration (CLI exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Experiment {
  advection_noise,
  advection_smooth,
  dissipative,
  oscillator,
  burgers,
  stability_regions,
  convergence,
};

std::string_view to_string(Experiment e);
Experiment parse_experiment(std::string_view name);

/// How the step size is given: raw dt, a multiple mu of the advection
/// stability limit, or a CFL number times the Burgers grid spacing.
enum class StepConvention { dt, mu, cfl };

struct ExperimentConfig {
  Experiment experiment = Experiment::oscillator;
  std::string scheme = "RK44";
  Method method = Method::classical;
  std::optional<Vector<double>> k;
  std::optional<StepConvention> convention;
  double step_value = 0.0;
  double t_end = 0.0;  // 0 selects the experiment default
  std::optional<std::uint64_t> seed;
  std::filesystem::path output = "out";
  std::size_t record_every = 1;
  int points = 0;                  // 0 selects the experiment default
  std::vector<double> epsilons;    // stability-regions
  std::string problem = "oscillator";  // convergence
  std::vector<double> steps;       // convergence: dts, or CFLs for burgers
};

using ConfigEntries = std::map<std::string, std::string>;

/// Reads a flat key=value file; '#' starts a comment.
ConfigEntries read_config_file(const std::filesystem::path& path);

/// Merges `overrides` over `base`. Any step key (dt, mu, cfl) in the
/// overrides replaces all step keys of the base.
ConfigEntries merge_entries(ConfigEntries base, const ConfigEntries& overrides);

/// Builds and validates a config. Throws ConfigError.
ExperimentConfig make_config(const ConfigEntries& entries);

/// Throws ConfigError unless the step convention matches the experiment.
void validate(const ExperimentConfig& cfg);

struct Failure {
  std::size_t step = 0;
  double time = 0.0;
  std::string reason;
};

struct RunSummary {
  std::string label;
  std::size_t steps = 0;
  double dt = 0.0;
  double final_time = 0.0;
  double initial_energy = 0.0;
  double final_energy = 0.0;
  double energy_drift = 0.0;          // final - initial
  double max_energy_deviation = 0.0;  // max_n |E_n - E_0| / E_0
  int energy_trend = 0;               // +1 / -1 strictly monotone every step, 0 otherwise
  double max_invariant_drift = 0.0;   // max_n |sum u^n - sum u^0| / max(|sum u^0|, tiny)
  std::optional<double> min_epsilon, max_epsilon, max_abs_epsilon;
  std::optional<double> min_gamma, max_gamma;
  std::optional<double> first_effective_dt, min_effective_dt, max_effective_dt;
  bool effective_dt_equals_dt = true;
  std::optional<double> first_step_energy;
  std::optional<double> error;
  std::optional<Failure> failure;
  State<double> initial_state;
  State<double> final_state;
};

/// Runs one experiment, writing CSV artifacts and summary.txt under
/// cfg.output. Integration failures are recorded in the summary, not thrown.
RunSummary run(const ExperimentConfig& cfg);

void write_summary(std::ostream& out, const RunSummary& s);

struct ConvergenceRow {
  std::string scheme;
  double dt = 0.0;
  double final_time = 0.0;
  double error = 0.0;
  bool used_in_fit = false;
  std::optional<std::string> failure;
};

struct ConvergenceTable {
  std::string problem;
  Method method = Method::classical;
  std::vector<ConvergenceRow> rows;
  std::map<std::string, std::optional<double>> slopes;
};

/// `steps` are dts for the oscillator and CFL numbers for burgers. Empty
/// `steps` selects 0.1 x 2^-(0..5) and 0.3 x 0.5^(0..6) respectively.
ConvergenceTable convergence_table(const std::string& problem,
                                   const std::vector<std::string>& schemes, Method method,
                                   std::vector<double> steps = {},
                                   std::optional<double> t_end = std::nullopt);

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table);
void write_slopes_csv(std::ostream& out, const ConvergenceTable& table);

struct Check {
  int criterion = 0;
  std::string name;
  std::string measured;
  std::string expected;
  bool passed = false;
};

struct Report {
  std::string target;
  std::vector<Check> checks;
  std::vector<std::string> notes;

  bool passed() const;
};

std::vector<std::string> reproduce_targets();

/// Runs the configuration matrix of `target` under `out_dir` and evaluates
/// its golden checks. Sub-run failures fail checks but never throw.
Report reproduce(const std::string& target, const std::filesystem::path& out_dir);

/// One line per check: PASS|FAIL, criterion, name, measured, expected
/// (tab separated), then notes prefixed by '#'.
void write_report(std::ostream& out, const Report& report);

/// "%.17g"
std::string fmt17(double x);

}  // namespace rfrk::harness
