#include "rfrk/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <mutex>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "rfrk/problems.hpp"
#include "rfrk/stability.hpp"
#include "rfrk/state_space.hpp"
#include "rfrk/tableau.hpp"

namespace rfrk::harness {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDefaultSeed = 1;
constexpr int kDefaultAdvectionPoints = 128;
constexpr int kDefaultBurgersPoints = 50;
constexpr int kDefaultRegionSamples = 800;
constexpr double kRegionReMin = -5.0, kRegionReMax = 1.0;
constexpr double kRegionImMin = -5.0, kRegionImMax = 5.0;

const std::vector<double> kDefaultEpsilons = {-0.05, -0.025, 0.0, 0.025, 0.05};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size() || !std::isfinite(x)) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not a finite number");
  }
}

unsigned long long parse_unsigned(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] == '-') throw std::invalid_argument(value);
    const auto x = std::stoull(value, &used, 0);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError(key + ": '" + value + "' is not a non-negative integer");
  }
}

std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::string normalized = value;
  std::replace(normalized.begin(), normalized.end(), ',', ' ');
  std::istringstream in(normalized);
  std::vector<double> out;
  std::string token;
  while (in >> token) out.push_back(parse_real(key, token));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

std::string opt17(const std::optional<double>& x) { return x ? fmt17(*x) : std::string(); }

bool is_step_key(const std::string& key) { return key == "dt" || key == "mu" || key == "cfl"; }

// Largest step no longer than `target` that divides `span` evenly.
double even_step(double span, double target) {
  return span / std::ceil(span / target - 1e-9);
}

StepConvention expected_convention(Experiment e) {
  switch (e) {
    case Experiment::advection_noise:
    case Experiment::advection_smooth: return StepConvention::mu;
    case Experiment::burgers: return StepConvention::cfl;
    default: return StepConvention::dt;
  }
}

std::string_view to_string(StepConvention c) {
  switch (c) {
    case StepConvention::dt: return "dt";
    case StepConvention::mu: return "mu";
    case StepConvention::cfl: return "cfl";
  }
  return "?";
}

std::optional<KVector<double>> k_for(const ExperimentConfig& cfg,
                                     const ButcherTableau<double>& t) {
  if (cfg.method != Method::relaxation_free) return std::nullopt;
  return validate_k(t, cfg.k.value_or(default_k(cfg.scheme)));
}

// Statistics over every step of a run, plus the strided time series.
class Recorder {
 public:
  Recorder(std::ostream& csv, std::size_t stride, double dt, bool with_state)
      : csv_(csv), stride_(stride), dt_(dt), with_state_(with_state) {}

  void header(Eigen::Index dimension) {
    csv_ << "step,t,energy,epsilon,gamma,effective_dt";
    if (with_state_) {
      for (Eigen::Index i = 0; i < dimension; ++i) csv_ << ",u" << i;
    }
    csv_ << '\n';
  }

  void operator()(const StepRecord<double>& r) {
    const double sum = r.state.sum();
    if (r.step == 0) {
      s.initial_energy = r.energy;
      s.initial_state = r.state;
      initial_sum_ = sum;
    } else {
      if (r.step == 1) s.first_step_energy = r.energy;
      increasing_ = increasing_ && r.energy > last_energy_;
      decreasing_ = decreasing_ && r.energy < last_energy_;
      const double scale = s.initial_energy > 0.0 ? s.initial_energy : 1.0;
      s.max_energy_deviation =
          std::max(s.max_energy_deviation, std::abs(r.energy - s.initial_energy) / scale);
      const double sum_scale = std::max(std::abs(initial_sum_), 1e-300);
      s.max_invariant_drift =
          std::max(s.max_invariant_drift, std::abs(sum - initial_sum_) / sum_scale);
      if (r.epsilon) {
        update_min(s.min_epsilon, *r.epsilon);
        update_max(s.max_epsilon, *r.epsilon);
        update_max(s.max_abs_epsilon, std::abs(*r.epsilon));
      }
      if (r.gamma) {
        update_min(s.min_gamma, *r.gamma);
        update_max(s.max_gamma, *r.gamma);
      }
      if (!s.first_effective_dt) s.first_effective_dt = r.effective_dt;
      update_min(s.min_effective_dt, r.effective_dt);
      update_max(s.max_effective_dt, r.effective_dt);
      if (r.effective_dt != dt_) s.effective_dt_equals_dt = false;
    }
    s.steps = r.step;
    s.final_time = r.t;
    s.final_energy = r.energy;
    s.final_state = r.state;
    last_energy_ = r.energy;
    if (r.step % stride_ == 0) {
      write(r);
      written_last_ = true;
    } else {
      last_ = r;
      written_last_ = false;
    }
  }

  RunSummary finish() {
    if (!written_last_) write(last_);
    s.energy_drift = s.final_energy - s.initial_energy;
    if (s.steps > 0) s.energy_trend = increasing_ ? 1 : (decreasing_ ? -1 : 0);
    return s;
  }

  RunSummary s;

 private:
  static void update_min(std::optional<double>& slot, double x) {
    if (!slot || x < *slot) slot = x;
  }
  static void update_max(std::optional<double>& slot, double x) {
    if (!slot || x > *slot) slot = x;
  }

  void write(const StepRecord<double>& r) {
    csv_ << r.step << ',' << fmt17(r.t) << ',' << fmt17(r.energy) << ','
         << opt17(r.epsilon) << ',' << opt17(r.gamma) << ',' << fmt17(r.effective_dt);
    if (with_state_) {
      for (Eigen::Index i = 0; i < r.state.size(); ++i) csv_ << ',' << fmt17(r.state(i));
    }
    csv_ << '\n';
  }

  std::ostream& csv_;
  std::size_t stride_;
  double dt_;
  bool with_state_;
  double initial_sum_ = 0.0;
  double last_energy_ = 0.0;
  bool increasing_ = true;
  bool decreasing_ = true;
  bool written_last_ = true;
  StepRecord<double> last_;
};

void write_profile(const fs::path& path, const Vector<double>& x, const RunSummary& s) {
  auto out = open_output(path);
  out << "x,u_initial,u_final\n";
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    out << fmt17(x(j)) << ',' << fmt17(s.initial_state(j)) << ',' << fmt17(s.final_state(j))
        << '\n';
  }
}

void write_modes(const fs::path& path, const RunSummary& s) {
  const auto before = dft_amplitudes(s.initial_state);
  const auto after = dft_amplitudes(s.final_state);
  const auto rel = relative_amplification(before, after);
  auto out = open_output(path);
  out << "k,amp_initial,amp_final,rel_amp\n";
  for (Eigen::Index k = 0; k < before.size(); ++k) {
    out << k << ',' << fmt17(before(k)) << ',' << fmt17(after(k)) << ',' << opt17(rel[k])
        << '\n';
  }
}

RunSummary run_trajectory(const ExperimentConfig& cfg) {
  const auto tableau = builtin_tableau(cfg.scheme);
  const auto k = k_for(cfg, tableau);

  Problem p;
  double dt = cfg.step_value;
  double t_end = cfg.t_end;
  Vector<double> x;
  switch (cfg.experiment) {
    case Experiment::advection_noise:
    case Experiment::advection_smooth: {
      const int m = cfg.points ? cfg.points : kDefaultAdvectionPoints;
      const auto grid = fourier_grid(m);
      p = advection_problem(grid);
      p.initial = cfg.experiment == Experiment::advection_noise
                      ? white_noise_init(m, cfg.seed.value_or(kDefaultSeed))
                      : smooth_init(grid);
      if (t_end == 0.0) t_end = 1.0;
      dt = even_step(t_end, cfg.step_value * dt_max(tableau, m));
      x = grid.x;
      break;
    }
    case Experiment::burgers: {
      const int n = cfg.points ? cfg.points : kDefaultBurgersPoints;
      p = burgers_problem(n);
      if (t_end == 0.0) t_end = 2.0;
      dt = even_step(t_end, cfg.step_value * burgers_dx(n));
      x = Vector<double>::LinSpaced(n, -1.0, -1.0 + (n - 1) * burgers_dx(n));
      break;
    }
    case Experiment::dissipative:
      p = dissipative_system();
      if (t_end == 0.0) t_end = dt;
      break;
    case Experiment::oscillator:
      p = oscillator_problem();
      if (t_end == 0.0) t_end = 100.0;
      break;
    default: throw std::logic_error("not a trajectory experiment");
  }
  if (cfg.method != Method::relaxation) {
    try {
      fixed_step_count(0.0, dt, t_end);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("t_end is not a whole number of steps: ") + e.what());
    }
  }

  auto csv = open_output(cfg.output / "timeseries.csv");
  Recorder rec(csv, cfg.record_every, dt, p.dimension <= 3);
  rec.header(p.dimension);
  std::optional<Failure> failure;
  try {
    integrate<double>(p.rhs, cfg.method, tableau, k, p.initial, 0.0, dt, t_end,
                      std::numeric_limits<std::size_t>::max(),
                      [&rec](const StepRecord<double>& r) { rec(r); });
  } catch (const IntegrationError& e) {
    failure = Failure{e.step(), e.time(), e.what()};
  }
  RunSummary s = rec.finish();
  s.label = std::string(to_string(cfg.experiment)) + "/" + cfg.scheme + "/" +
            std::string(to_string(cfg.method));
  s.dt = dt;
  s.failure = failure;
  if (p.exact && !failure) s.error = (s.final_state - p.exact(s.final_time)).norm();

  if (x.size() > 0) write_profile(cfg.output / "profile.csv", x, s);
  if (cfg.experiment == Experiment::advection_noise ||
      cfg.experiment == Experiment::advection_smooth) {
    write_modes(cfg.output / "modes.csv", s);
  }
  return s;
}

std::string eps_tag(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.4f", eps);
  return buf;
}

RunSummary run_regions(const ExperimentConfig& cfg) {
  const auto tableau = builtin_tableau(cfg.scheme);
  const auto& epsilons = cfg.epsilons.empty() ? kDefaultEpsilons : cfg.epsilons;
  const int n = cfg.points ? cfg.points : kDefaultRegionSamples;
  std::optional<KVector<double>> k;
  if (std::any_of(epsilons.begin(), epsilons.end(), [](double e) { return e != 0.0; })) {
    k = validate_k(tableau, cfg.k.value_or(default_k(cfg.scheme)));
  }
  auto limits = open_output(cfg.output / "limits.csv");
  limits << "epsilon,imaginary_limit\n";
  for (const double eps : epsilons) {
    const auto poly = eps == 0.0 ? stability_polynomial(tableau) : rf_polynomial(tableau, *k, eps);
    const auto grid =
        region_scan(poly, kRegionReMin, kRegionReMax, kRegionImMin, kRegionImMax, n, n);
    auto out = open_output(cfg.output / ("region_" + cfg.scheme + "_eps" + eps_tag(eps) + ".csv"));
    write_region_csv(out, grid);
    std::optional<double> limit;
    try {
      limit = imaginary_axis_limit(poly);
    } catch (const NoStableIntervalError&) {
    }
    limits << fmt17(eps) << ',' << opt17(limit) << '\n';
  }
  RunSummary s;
  s.label = "stability-regions/" + cfg.scheme;
  return s;
}

RunSummary run_convergence(const ExperimentConfig& cfg) {
  const auto table =
      convergence_table(cfg.problem, {cfg.scheme}, cfg.method, cfg.steps,
                        cfg.t_end > 0.0 ? std::optional<double>(cfg.t_end) : std::nullopt);
  {
    auto out = open_output(cfg.output / "convergence.csv");
    write_convergence_csv(out, table);
  }
  {
    auto out = open_output(cfg.output / "slopes.csv");
    write_slopes_csv(out, table);
  }
  RunSummary s;
  s.label = "convergence/" + cfg.problem + "/" + cfg.scheme + "/" +
            std::string(to_string(cfg.method));
  if (!table.slopes.at(cfg.scheme)) {
    s.failure = Failure{0, 0.0, "fewer than two usable convergence points"};
  }
  return s;
}

}  // namespace

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string_view to_string(Experiment e) {
  switch (e) {
    case Experiment::advection_noise: return "advection-noise";
    case Experiment::advection_smooth: return "advection-smooth";
    case Experiment::dissipative: return "dissipative";
    case Experiment::oscillator: return "oscillator";
    case Experiment::burgers: return "burgers";
    case Experiment::stability_regions: return "stability-regions";
    case Experiment::convergence: return "convergence";
  }
  return "?";
}

Experiment parse_experiment(std::string_view name) {
  for (auto e : {Experiment::advection_noise, Experiment::advection_smooth,
                 Experiment::dissipative, Experiment::oscillator, Experiment::burgers,
                 Experiment::stability_regions, Experiment::convergence}) {
    if (to_string(e) == name) return e;
  }
  throw ConfigError("unknown experiment '" + std::string(name) + "'");
}

ConfigEntries read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  ConfigEntries entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(std::string_view(text).substr(0, eq));
    if (key.empty()) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
    }
    entries[key] = trim(std::string_view(text).substr(eq + 1));
  }
  return entries;
}

ConfigEntries merge_entries(ConfigEntries base, const ConfigEntries& overrides) {
  const bool overrides_step = std::any_of(overrides.begin(), overrides.end(),
                                          [](const auto& kv) { return is_step_key(kv.first); });
  if (overrides_step) {
    for (const char* key : {"dt", "mu", "cfl"}) base.erase(key);
  }
  for (const auto& [key, value] : overrides) base[key] = value;
  return base;
}

ExperimentConfig make_config(const ConfigEntries& entries) {
  ExperimentConfig cfg;
  int step_keys = 0;
  for (const auto& [key, value] : entries) {
    if (key == "experiment") {
      cfg.experiment = parse_experiment(value);
    } else if (key == "scheme") {
      cfg.scheme = value;
    } else if (key == "mode") {
      try {
        cfg.method = parse_method(value);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    } else if (key == "k") {
      const auto list = parse_list(key, value);
      cfg.k = Eigen::Map<const Vector<double>>(list.data(), static_cast<Eigen::Index>(list.size()));
    } else if (is_step_key(key)) {
      ++step_keys;
      cfg.convention = key == "dt" ? StepConvention::dt
                       : key == "mu" ? StepConvention::mu
                                     : StepConvention::cfl;
      cfg.step_value = parse_real(key, value);
    } else if (key == "t_end") {
      cfg.t_end = parse_real(key, value);
    } else if (key == "seed") {
      cfg.seed = parse_unsigned(key, value);
    } else if (key == "out") {
      cfg.output = value;
    } else if (key == "record_every") {
      cfg.record_every = parse_unsigned(key, value);
    } else if (key == "points") {
      cfg.points = static_cast<int>(parse_unsigned(key, value));
    } else if (key == "eps") {
      cfg.epsilons = parse_list(key, value);
    } else if (key == "problem") {
      cfg.problem = value;
    } else if (key == "steps") {
      cfg.steps = parse_list(key, value);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  if (step_keys > 1) throw ConfigError("give exactly one of dt, mu, cfl");
  validate(cfg);
  return cfg;
}

void validate(const ExperimentConfig& cfg) {
  ButcherTableau<double> tableau = [&] {
    try {
      return builtin_tableau(cfg.scheme);
    } catch (const UnknownSchemeError& e) {
      throw ConfigError(e.what());
    }
  }();
  if (cfg.k) {
    if (cfg.method != Method::relaxation_free && cfg.experiment != Experiment::stability_regions) {
      throw ConfigError("a k override only applies to mode rf");
    }
    if (cfg.experiment == Experiment::convergence) {
      throw ConfigError("convergence runs use the built-in k-vectors");
    }
    try {
      validate_k(tableau, *cfg.k);
    } catch (const KVectorError& e) {
      throw ConfigError(e.what());
    }
  }

  const bool stepless = cfg.experiment == Experiment::stability_regions ||
                        cfg.experiment == Experiment::convergence;
  if (stepless) {
    if (cfg.convention) {
      throw ConfigError(std::string(to_string(cfg.experiment)) + " takes no dt, mu or cfl");
    }
  } else {
    const auto want = expected_convention(cfg.experiment);
    if (!cfg.convention) {
      throw ConfigError(std::string(to_string(cfg.experiment)) + " needs " +
                        std::string(to_string(want)));
    }
    if (*cfg.convention != want) {
      throw ConfigError(std::string(to_string(cfg.experiment)) + " takes " +
                        std::string(to_string(want)) + ", not " +
                        std::string(to_string(*cfg.convention)));
    }
    if (!(cfg.step_value > 0.0)) throw ConfigError("step value must be positive");
  }
  if (cfg.t_end < 0.0) throw ConfigError("t_end must be positive");
  if (cfg.record_every == 0) throw ConfigError("record_every must be at least 1");

  switch (cfg.experiment) {
    case Experiment::advection_noise:
    case Experiment::advection_smooth:
      if (cfg.points != 0 && (cfg.points < 4 || cfg.points % 2 != 0)) {
        throw ConfigError("advection needs an even point count >= 4");
      }
      try {
        dt_max(tableau, cfg.points ? cfg.points : kDefaultAdvectionPoints);
      } catch (const NoStableIntervalError&) {
        throw ConfigError(cfg.scheme + " has no stable imaginary-axis interval, so mu is undefined");
      }
      break;
    case Experiment::burgers:
      if (cfg.points != 0 && cfg.points < 3) throw ConfigError("burgers needs >= 3 points");
      break;
    case Experiment::stability_regions:
      if (cfg.points != 0 && cfg.points < 2) throw ConfigError("region scans need >= 2 samples");
      break;
    case Experiment::convergence:
      if (cfg.problem != "oscillator" && cfg.problem != "burgers") {
        throw ConfigError("convergence problem must be oscillator or burgers");
      }
      for (const double s : cfg.steps) {
        if (!(s > 0.0)) throw ConfigError("convergence steps must be positive");
      }
      break;
    default: break;
  }
}

RunSummary run(const ExperimentConfig& cfg) {
  validate(cfg);
  std::error_code ec;
  fs::create_directories(cfg.output, ec);
  if (ec) throw Error("cannot create " + cfg.output.string() + ": " + ec.message());

  RunSummary s;
  switch (cfg.experiment) {
    case Experiment::stability_regions: s = run_regions(cfg); break;
    case Experiment::convergence: s = run_convergence(cfg); break;
    default: s = run_trajectory(cfg); break;
  }
  auto out = open_output(cfg.output / "summary.txt");
  write_summary(out, s);
  return s;
}

void write_summary(std::ostream& out, const RunSummary& s) {
  auto line = [&out](const char* key, const std::string& value) {
    out << key << " = " << value << '\n';
  };
  line("label", s.label);
  line("steps", std::to_string(s.steps));
  line("dt", fmt17(s.dt));
  line("final_time", fmt17(s.final_time));
  line("initial_energy", fmt17(s.initial_energy));
  line("final_energy", fmt17(s.final_energy));
  line("energy_drift", fmt17(s.energy_drift));
  line("max_energy_deviation", fmt17(s.max_energy_deviation));
  line("energy_trend", std::to_string(s.energy_trend));
  line("max_invariant_drift", fmt17(s.max_invariant_drift));
  line("min_epsilon", opt17(s.min_epsilon));
  line("max_epsilon", opt17(s.max_epsilon));
  line("max_abs_epsilon", opt17(s.max_abs_epsilon));
  line("min_gamma", opt17(s.min_gamma));
  line("max_gamma", opt17(s.max_gamma));
  line("first_effective_dt", opt17(s.first_effective_dt));
  line("min_effective_dt", opt17(s.min_effective_dt));
  line("max_effective_dt", opt17(s.max_effective_dt));
  line("effective_dt_equals_dt", s.effective_dt_equals_dt ? "true" : "false");
  line("first_step_energy", opt17(s.first_step_energy));
  line("error", opt17(s.error));
  if (s.failure) {
    line("failure_step", std::to_string(s.failure->step));
    line("failure_time", fmt17(s.failure->time));
    line("failure_reason", s.failure->reason);
  } else {
    line("failure_step", "");
  }
}

ConvergenceTable convergence_table(const std::string& problem,
                                   const std::vector<std::string>& schemes, Method method,
                                   std::vector<double> steps, std::optional<double> t_end) {
  ConvergenceTable table;
  table.problem = problem;
  table.method = method;

  Problem p;
  std::function<State<double>(double)> exact;
  std::vector<double> dts;
  double span = 0.0;
  if (problem == "oscillator") {
    p = oscillator_problem();
    exact = p.exact;
    span = t_end.value_or(10.0);
    if (steps.empty()) {
      for (int i = 0; i <= 5; ++i) steps.push_back(0.1 * std::ldexp(1.0, -i));
    }
    dts = steps;
    if (method != Method::relaxation) {
      for (const double dt : dts) {
        try {
          fixed_step_count(0.0, dt, span);
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("oscillator convergence: ") + e.what());
        }
      }
    }
  } else if (problem == "burgers") {
    p = burgers_problem(kDefaultBurgersPoints);
    exact = reference_solution(p);
    span = t_end.value_or(0.2);
    if (steps.empty()) {
      for (int i = 0; i <= 6; ++i) steps.push_back(0.3 * std::ldexp(1.0, -i));
    }
    for (const double cfl : steps) {
      dts.push_back(even_step(span, cfl * burgers_dx(kDefaultBurgersPoints)));
    }
  } else {
    throw ConfigError("unknown convergence problem '" + problem + "'");
  }
  if (!(span > 0.0)) throw ConfigError("convergence t_end must be positive");
  for (const double dt : dts) {
    if (!(dt > 0.0)) throw ConfigError("convergence steps must be positive");
  }

  for (const auto& scheme : schemes) {
    const auto tableau = builtin_tableau(scheme);
    std::optional<KVector<double>> k;
    if (method == Method::relaxation_free) k = validate_k(tableau, default_k(scheme));
    const auto points =
        measure_convergence<double>(p.rhs, exact, method, tableau, k, p.initial, 0.0, span, dts);
    for (const auto& pt : points) {
      table.rows.push_back({scheme, pt.dt, pt.final_time, pt.error, pt.used_in_fit, pt.failure});
    }
    try {
      table.slopes[scheme] = fit_convergence(points);
    } catch (const ConvergenceError&) {
      table.slopes[scheme] = std::nullopt;
    }
  }
  return table;
}

void write_convergence_csv(std::ostream& out, const ConvergenceTable& table) {
  out << "scheme,dt,final_time,error,used_in_fit,failure\n";
  for (const auto& r : table.rows) {
    out << r.scheme << ',' << fmt17(r.dt) << ',' << fmt17(r.final_time) << ','
        << fmt17(r.error) << ',' << (r.used_in_fit ? 1 : 0) << ',';
    if (r.failure) {
      std::string reason = *r.failure;
      std::replace(reason.begin(), reason.end(), ',', ';');
      out << reason;
    }
    out << '\n';
  }
}

void write_slopes_csv(std::ostream& out, const ConvergenceTable& table) {
  out << "scheme,slope\n";
  for (const auto& [scheme, slope] : table.slopes) out << scheme << ',' << opt17(slope) << '\n';
}

bool Report::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

void write_report(std::ostream& out, const Report& report) {
  out << "# target " << report.target << '\n';
  for (const auto& c : report.checks) {
    out << (c.passed ? "PASS" : "FAIL") << '\t' << c.criterion << '\t' << c.name << '\t'
        << c.measured << '\t' << c.expected << '\n';
  }
  for (const auto& n : report.notes) out << "# " << n << '\n';
}

namespace {

ExperimentConfig make_run(Experiment e, const std::string& scheme, Method method,
                          StepConvention convention, double step, double t_end,
                          const fs::path& out) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  cfg.scheme = scheme;
  cfg.method = method;
  cfg.convention = convention;
  cfg.step_value = step;
  cfg.t_end = t_end;
  cfg.output = out;
  return cfg;
}

std::string run_dir(const std::string& scheme, Method method, const std::string& extra = "") {
  std::string name = scheme + "_" + std::string(to_string(method));
  if (!extra.empty()) name += "_" + extra;
  return name;
}

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string method_label(Method m, const std::string& scheme) {
  switch (m) {
    case Method::classical: return scheme;
    case Method::idt: return "IDT-" + scheme;
    case Method::relaxation: return "R-" + scheme;
    case Method::relaxation_free: return "RF-" + scheme;
  }
  return scheme;
}

class Target {
 public:
  Target(Report& report, fs::path dir) : report_(report), dir_(std::move(dir)) {}

  // Never throws: configuration problems become a failure in the summary.
  RunSummary run_sub(ExperimentConfig cfg) {
    cfg.output = dir_ / cfg.output;
    try {
      return run(cfg);
    } catch (const std::exception& e) {
      RunSummary s;
      s.label = cfg.output.string();
      s.failure = Failure{0, 0.0, e.what()};
      note("run " + cfg.output.string() + " aborted: " + e.what());
      return s;
    }
  }

  void check(int criterion, std::string name, std::string measured, std::string expected,
             bool passed) {
    const std::lock_guard lock(mutex_);
    report_.checks.push_back(
        {criterion, std::move(name), std::move(measured), std::move(expected), passed});
  }

  void note(std::string text) {
    const std::lock_guard lock(mutex_);
    report_.notes.push_back(std::move(text));
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  void ensure_dir() const { fs::create_directories(dir_); }

  void write_table(const std::string& name, const ConvergenceTable& table) {
    ensure_dir();
    auto out = open_output(dir_ / (name + "_convergence.csv"));
    write_convergence_csv(out, table);
    auto slopes = open_output(dir_ / (name + "_slopes.csv"));
    write_slopes_csv(slopes, table);
  }

 private:
  Report& report_;
  fs::path dir_;
  std::mutex mutex_;
};

std::string failure_text(const RunSummary& s) {
  if (!s.failure) return "completed";
  return "failed at step " + std::to_string(s.failure->step) + ": " + s.failure->reason;
}

int declared_order(const std::string& scheme) { return builtin_tableau(scheme).order(); }

void target_table1(Target& t) {
  t.ensure_dir();
  auto csv = open_output(t.path("table1.csv"));
  csv << "method,dt,effective_dt,relative_change_percent\n";
  const struct { double dt, expected, change; } rows[] = {{0.5, 0.44, 12.0}, {0.7, 0.42, 40.0}};
  for (const auto& row : rows) {
    const std::string tag = "dt" + fixed(row.dt, 2);
    for (const Method m : {Method::relaxation, Method::relaxation_free}) {
      const auto s = t.run_sub(make_run(Experiment::dissipative, "RK44", m, StepConvention::dt,
                                        row.dt, row.dt, run_dir("RK44", m, tag)));
      const double eff = s.first_effective_dt.value_or(std::nan(""));
      const double change = 100.0 * (row.dt - eff) / row.dt;
      csv << method_label(m, "RK44") << ',' << fmt17(row.dt) << ',' << fmt17(eff) << ','
          << fmt17(change) << '\n';
      const std::string who = method_label(m, "RK44") + " from dt=" + fixed(row.dt, 2);
      if (m == Method::relaxation) {
        t.check(1, who + " first effective dt", fmt17(eff), fixed(row.expected, 2) + " +- 0.01",
                !s.failure && std::abs(eff - row.expected) <= 0.01);
        t.check(1, who + " relative step change (%)", fixed(change, 2),
                fixed(row.change, 0) + " +- 1", !s.failure && std::abs(change - row.change) <= 1.0);
      } else {
        t.check(1, who + " first effective dt", fmt17(eff), fixed(row.dt, 2) + " exactly",
                !s.failure && eff == row.dt && s.effective_dt_equals_dt);
        t.check(1, who + " relative step change (%)", fixed(change, 2), "0 +- 1",
                !s.failure && std::abs(change) <= 1.0);
      }
      t.note(method_label(m, "RK44") + "  dt " + fixed(row.dt, 2) + " -> " + fixed(eff, 4) +
             "  (" + fixed(change, 1) + "%)");
    }
  }
}

void target_fig6(Target& t) {
  for (const double dt : {0.5, 0.7}) {
    const std::string tag = "dt" + fixed(dt, 2);
    for (const Method m : {Method::classical, Method::relaxation, Method::relaxation_free}) {
      const auto s = t.run_sub(make_run(Experiment::dissipative, "RK44", m, StepConvention::dt,
                                        dt, dt, run_dir("RK44", m, tag)));
      const double change = s.first_step_energy.value_or(std::nan("")) - s.initial_energy;
      const bool up = m == Method::classical;
      t.check(2, method_label(m, "RK44") + " first-step energy change, dt=" + fixed(dt, 2),
              fmt17(change), up ? "> 0" : "< 0",
              !s.failure && (up ? change > 0.0 : change < 0.0));
    }
  }
}

void target_fig7(Target& t) {
  t.note("energy-evolution runs use t_end = 100");
  for (const auto& scheme : builtin_scheme_names()) {
    for (const Method m : {Method::classical, Method::relaxation, Method::relaxation_free}) {
      const auto s = t.run_sub(make_run(Experiment::oscillator, scheme, m, StepConvention::dt, 0.1,
                                        100.0, run_dir(scheme, m)));
      const std::string who = method_label(m, scheme);
      if (m == Method::relaxation) {
        const double lo = s.min_effective_dt.value_or(std::nan(""));
        const double hi = s.max_effective_dt.value_or(std::nan(""));
        t.check(3, who + " effective steps", "[" + fmt17(lo) + ", " + fmt17(hi) + "]",
                "within [0.0995, 0.1]", !s.failure && lo >= 0.0995 && hi <= 0.1);
      } else if (m == Method::relaxation_free) {
        t.check(0, who + " effective dt equals dt on every step",
                s.effective_dt_equals_dt ? "true" : "false", "true",
                !s.failure && s.effective_dt_equals_dt);
        if (scheme == "RK44") {
          t.check(3, who + " max | |u|^2 - 1 |", fmt17(s.max_energy_deviation), "<= 1e-10",
                  !s.failure && s.max_energy_deviation <= 1e-10);
          const double lo = s.min_epsilon.value_or(std::nan(""));
          const double hi = s.max_epsilon.value_or(std::nan(""));
          t.check(3, who + " epsilon range", "[" + fmt17(lo) + ", " + fmt17(hi) + "]",
                  "within [-0.0015, 0]", !s.failure && lo >= -0.0015 && hi <= 0.0);
        } else {
          t.note(who + " epsilon in [" + fmt17(s.min_epsilon.value_or(0)) + ", " +
                 fmt17(s.max_epsilon.value_or(0)) + "], max energy deviation " +
                 fmt17(s.max_energy_deviation));
        }
      } else {
        t.note(who + " energy at t=100: " + fmt17(s.final_energy) + ", " + failure_text(s));
      }
    }
  }
}

// max|eps_n| of one RF oscillator run, or NaN on failure.
double max_abs_epsilon(const std::string& scheme, double dt, double t_end) {
  const auto tableau = builtin_tableau(scheme);
  const auto k = validate_k(tableau, default_k(scheme));
  const auto p = oscillator_problem();
  double peak = 0.0;
  try {
    integrate<double>(p.rhs, Method::relaxation_free, tableau, k, p.initial, 0.0, dt, t_end,
                      std::numeric_limits<std::size_t>::max(),
                      [&peak](const StepRecord<double>& r) {
                        if (r.epsilon) peak = std::max(peak, std::abs(*r.epsilon));
                      });
  } catch (const IntegrationError&) {
    return std::nan("");
  }
  return peak;
}

void target_fig8(Target& t) {
  const auto schemes = builtin_scheme_names();
  for (const Method m : {Method::classical, Method::relaxation_free}) {
    ConvergenceTable table;
    try {
      table = convergence_table("oscillator", schemes, m);
    } catch (const std::exception& e) {
      t.note(std::string("oscillator convergence aborted: ") + e.what());
    }
    if (!table.rows.empty()) t.write_table(std::string(to_string(m)), table);
    for (const auto& scheme : schemes) {
      const int p = declared_order(scheme);
      const auto it = table.slopes.find(scheme);
      const auto slope = it == table.slopes.end() ? std::nullopt : it->second;
      const std::string measured = slope ? fixed(*slope, 3) : "no fit";
      if (m == Method::classical) {
        t.check(4, method_label(m, scheme) + " oscillator slope", measured,
                std::to_string(p) + " +- 0.2", slope && std::abs(*slope - p) <= 0.2);
      } else {
        t.check(4, method_label(m, scheme) + " oscillator slope", measured,
                ">= " + fixed(p - 0.2, 1), slope && *slope >= p - 0.2);
      }
    }
  }

  // epsilon scaling under dt halving
  t.ensure_dir();
  auto csv = open_output(t.path("eps_scaling.csv"));
  csv << "scheme,dt,max_abs_epsilon,ratio,ratio_times_2pow_p_minus_1\n";
  constexpr int kLevels = 4;
  constexpr double kSpan = 1.0;
  for (const auto& scheme : schemes) {
    const int p = declared_order(scheme);
    const double target = std::ldexp(1.0, -(p - 1));
    double prev = std::nan("");
    bool within = true;
    bool bounded = true;
    std::string ratios;
    for (int level = 0; level < kLevels; ++level) {
      const double dt = 0.1 * std::ldexp(1.0, -level);
      const double peak = max_abs_epsilon(scheme, dt, kSpan);
      csv << scheme << ',' << fmt17(dt) << ',' << fmt17(peak);
      if (level > 0) {
        const double ratio = peak / prev;
        const double scaled = ratio / target;
        within = within && scaled >= 0.75 && scaled <= 1.25;
        bounded = bounded && scaled <= 1.25;
        if (!ratios.empty()) ratios += " ";
        ratios += fixed(scaled, 3);
        csv << ',' << fmt17(ratio) << ',' << fmt17(scaled);
      } else {
        csv << ",,";
      }
      csv << '\n';
      prev = peak;
    }
    t.check(8, "RF-" + scheme + " max|eps| halving ratios x 2^(p-1)", ratios,
            "each in [0.75, 1.25]", within);
    t.check(0, "RF-" + scheme + " max|eps| vanishes at least at rate p-1", ratios,
            "each <= 1.25", bounded);
  }
}

void target_fig9(Target& t) {
  for (const auto& scheme : builtin_scheme_names()) {
    for (const Method m :
         {Method::classical, Method::idt, Method::relaxation, Method::relaxation_free}) {
      const auto s = t.run_sub(make_run(Experiment::burgers, scheme, m, StepConvention::cfl, 0.3,
                                        2.0, run_dir(scheme, m)));
      const std::string who = method_label(m, scheme);
      if (m == Method::classical) {
        t.check(6, who + " energy trend", std::to_string(s.energy_trend),
                "strictly monotone (+1 or -1)", !s.failure && s.energy_trend != 0);
      } else if (m != Method::idt) {
        t.check(6, who + " max relative energy deviation", fmt17(s.max_energy_deviation),
                "<= 1e-11", !s.failure && s.max_energy_deviation <= 1e-11);
      }
      t.check(6, who + " max relative drift of sum u", fmt17(s.max_invariant_drift),
              "<= 1e-12", !s.failure && s.max_invariant_drift <= 1e-12);
      t.note(who + " energy " + fmt17(s.initial_energy) + " -> " + fmt17(s.final_energy) +
             ", " + failure_text(s));
    }
  }
}

void target_fig10(Target& t) {
  const auto schemes = builtin_scheme_names();
  for (const Method m : {Method::classical, Method::idt, Method::relaxation,
                         Method::relaxation_free}) {
    ConvergenceTable table;
    try {
      table = convergence_table("burgers", schemes, m);
    } catch (const std::exception& e) {
      t.note(std::string("burgers convergence aborted: ") + e.what());
    }
    if (!table.rows.empty()) t.write_table(std::string(to_string(m)), table);
    for (const auto& [scheme, slope] : table.slopes) {
      t.note(method_label(m, scheme) + " burgers slope " + (slope ? fixed(*slope, 3) : "n/a"));
    }
    if (m == Method::classical) continue;
    const auto it = table.slopes.find("RK44");
    const auto slope = it == table.slopes.end() ? std::nullopt : it->second;
    const std::string measured = slope ? fixed(*slope, 3) : "no fit";
    if (m == Method::idt) {
      t.check(5, "IDT-RK44 burgers slope", measured, "3.0 +- 0.3",
              slope && std::abs(*slope - 3.0) <= 0.3);
    } else {
      t.check(5, method_label(m, "RK44") + " burgers slope", measured, ">= 3.7",
              slope && *slope >= 3.7);
    }
  }
}

// True when relative amplification strictly decreases over k = m/4 .. m/2-1.
bool high_k_damping_monotone(const RunSummary& s) {
  if (s.initial_state.size() == 0 || s.final_state.size() == 0) return false;
  const auto rel = relative_amplification(dft_amplitudes(s.initial_state),
                                          dft_amplitudes(s.final_state));
  const auto m = static_cast<std::size_t>(s.initial_state.size());
  for (std::size_t k = m / 4 + 1; k < m / 2; ++k) {
    if (!rel[k] || !rel[k - 1] || !(*rel[k] < *rel[k - 1])) return false;
  }
  return true;
}

void target_fig2_5(Target& t) {
  const double mus[] = {0.3, 0.6, 0.9};
  t.note("white noise from splitmix64 seed " + std::to_string(kDefaultSeed) + ", m = " +
         std::to_string(kDefaultAdvectionPoints));

  std::vector<double> classical_energy;
  for (const double mu : mus) {
    const std::string tag = "mu" + fixed(mu, 2);
    for (const Method m : {Method::classical, Method::relaxation, Method::relaxation_free}) {
      const auto s = t.run_sub(make_run(Experiment::advection_noise, "RK44", m, StepConvention::mu,
                                        mu, 1.0, "noise/" + run_dir("RK44", m, tag)));
      const std::string who = method_label(m, "RK44") + " mu=" + fixed(mu, 2);
      if (m == Method::classical) {
        classical_energy.push_back(s.failure ? std::nan("") : s.final_energy);
        t.note(who + " relative energy change " +
               fmt17(s.energy_drift / s.initial_energy));
        if (mu < 0.9) {
          t.check(0, who + " high-k relative amplification decreasing in k",
                  high_k_damping_monotone(s) ? "monotone" : "not monotone", "monotone",
                  !s.failure && high_k_damping_monotone(s));
        }
      } else {
        t.check(7, who + " max relative energy deviation", fmt17(s.max_energy_deviation),
                "<= 1e-10", !s.failure && s.max_energy_deviation <= 1e-10);
      }
    }
  }
  const bool decreasing = classical_energy[0] > classical_energy[1] &&
                          classical_energy[1] > classical_energy[2];
  t.check(7, "RK44 final energy at mu = 0.3, 0.6, 0.9",
          fmt17(classical_energy[0]) + " > " + fmt17(classical_energy[1]) + " > " +
              fmt17(classical_energy[2]),
          "strictly decreasing", decreasing);
  {
    const auto s = t.run_sub(make_run(Experiment::advection_noise, "RK44", Method::relaxation_free,
                                      StepConvention::mu, 0.99, 1.0,
                                      "noise/" + run_dir("RK44", Method::relaxation_free, "mu0.99")));
    t.check(7, "RF-RK44 mu=0.99 completes", failure_text(s), "completed", !s.failure);
  }

  for (const double mu : mus) {
    const std::string tag = "mu" + fixed(mu, 2);
    for (const Method m : {Method::classical, Method::relaxation, Method::relaxation_free}) {
      const auto s = t.run_sub(make_run(Experiment::advection_smooth, "RK44", m,
                                        StepConvention::mu, mu, 1.0,
                                        "smooth/" + run_dir("RK44", m, tag)));
      t.note(method_label(m, "RK44") + " smooth mu=" + fixed(mu, 2) + " relative energy change " +
             fmt17(s.energy_drift / s.initial_energy) + ", " + failure_text(s));
    }
  }

  // Long runs at and just past the linear stability limit, in parallel.
  const double long_t = 400.0 * std::numbers::pi;
  struct Long { double mu; Method m; };
  const std::vector<Long> long_runs = {
      {0.99, Method::classical},      {0.99, Method::relaxation},
      {0.99, Method::relaxation_free}, {1.0001, Method::classical},
      {1.0001, Method::relaxation},   {1.0001, Method::relaxation_free}};
  std::vector<std::future<RunSummary>> futures;
  for (const auto& lr : long_runs) {
    auto cfg = make_run(Experiment::advection_smooth, "RK44", lr.m, StepConvention::mu, lr.mu,
                        long_t, "long/" + run_dir("RK44", lr.m, "mu" + fixed(lr.mu, 4)));
    cfg.record_every = 100;
    futures.push_back(std::async(std::launch::async, [&t, cfg] { return t.run_sub(cfg); }));
  }
  for (std::size_t i = 0; i < long_runs.size(); ++i) {
    const auto s = futures[i].get();
    std::string text = method_label(long_runs[i].m, "RK44") + " smooth mu=" +
                       fixed(long_runs[i].mu, 4) + " to t=400pi: " + failure_text(s) +
                       ", relative energy change " + fmt17(s.energy_drift / s.initial_energy);
    if (s.max_abs_epsilon) text += ", max|eps| " + fmt17(*s.max_abs_epsilon);
    t.note(text);
    if (long_runs[i].m == Method::relaxation_free && long_runs[i].mu < 1.0) {
      const double peak = s.max_abs_epsilon.value_or(std::nan(""));
      t.check(0, "RF-RK44 smooth mu=0.99 to t=400pi max|eps|", fmt17(peak), "< 1.25e-3",
              !s.failure && peak < 1.25e-3);
    }
  }
}

void target_fig1(Target& t) {
  auto limit_of = [](const std::string& scheme) -> std::optional<double> {
    try {
      return imaginary_axis_limit(stability_polynomial(builtin_tableau(scheme)));
    } catch (const NoStableIntervalError&) {
      return std::nullopt;
    }
  };
  const auto rk44 = limit_of("RK44");
  t.check(9, "RK44 imaginary-axis limit", rk44 ? fmt17(*rk44) : "none", "2.8284 +- 1e-3",
          rk44 && std::abs(*rk44 - 2.8284) <= 1e-3);
  const auto ssp33 = limit_of("SSPRK33");
  t.check(9, "SSPRK33 imaginary-axis limit", ssp33 ? fmt17(*ssp33) : "none", "1.7321 +- 1e-3",
          ssp33 && std::abs(*ssp33 - 1.7321) <= 1e-3);
  const auto ssp22 = limit_of("SSPRK22");
  t.check(9, "SSPRK22 imaginary-axis limit", ssp22 ? fmt17(*ssp22) : "no stable interval",
          "no stable interval", !ssp22);
  if (const auto bs = limit_of("BSRK85")) t.note("BSRK85 imaginary-axis limit " + fmt17(*bs));

  // u' = lambda u as a real 2x2 rotation-scaling system
  const std::complex<double> lambdas[] = {{-1.3, 0.0}, {0.0, 2.0}, {-0.4, 1.1}};
  constexpr double kDt = 0.7;
  for (const auto& scheme : builtin_scheme_names()) {
    const auto tableau = builtin_tableau(scheme);
    const auto poly = stability_polynomial(tableau);
    double worst = 0.0;
    for (const auto lambda : lambdas) {
      const double a = lambda.real(), b = lambda.imag();
      const Rhs<double> rhs = [a, b](double, const State<double>& u) -> State<double> {
        State<double> f(2);
        f << a * u(0) - b * u(1), b * u(0) + a * u(1);
        return f;
      };
      State<double> u0(2);
      u0 << 1.0, 0.0;
      const auto r = step<double>(Method::classical, tableau, nullptr, rhs, 0.0, u0, kDt);
      const std::complex<double> got(r.state(0), r.state(1));
      const auto want = eval_poly(poly, lambda * kDt);
      worst = std::max(worst, std::abs(got - want) / std::abs(want));
    }
    t.check(9, scheme + " one step on u'=lambda u vs R(lambda dt)", fmt17(worst),
            "<= 1e-13 relative", worst <= 1e-13);
  }

  constexpr int kSamples = 201;
  t.note("region grids sampled at " + std::to_string(kSamples) + " x " +
         std::to_string(kSamples) + " over [-5,1] x [-5,5]");
  for (const std::string scheme : {"SSPRK22", "SSPRK33", "RK44"}) {
    ExperimentConfig cfg;
    cfg.experiment = Experiment::stability_regions;
    cfg.scheme = scheme;
    cfg.points = kSamples;
    cfg.output = scheme;
    const auto s = t.run_sub(cfg);
    if (s.failure) t.check(9, scheme + " region grids", failure_text(s), "written", false);
  }
}

using TargetFn = void (*)(Target&);

const std::vector<std::pair<std::string, TargetFn>>& targets() {
  static const std::vector<std::pair<std::string, TargetFn>> list = {
      {"table1", target_table1}, {"fig2-5", target_fig2_5}, {"fig6", target_fig6},
      {"fig7", target_fig7},     {"fig8", target_fig8},     {"fig9", target_fig9},
      {"fig10", target_fig10},   {"fig1", target_fig1}};
  return list;
}

}  // namespace

std::vector<std::string> reproduce_targets() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : targets()) names.push_back(name);
  names.push_back("all");
  return names;
}

Report reproduce(const std::string& target, const fs::path& out_dir) {
  Report report;
  report.target = target;
  bool found = false;
  for (const auto& [name, fn] : targets()) {
    if (target != "all" && target != name) continue;
    found = true;
    Target t(report, target == "all" ? out_dir / name : out_dir);
    try {
      fn(t);
    } catch (const std::exception& e) {
      t.check(0, name + " target", e.what(), "runs to completion", false);
    }
  }
  if (!found) throw ConfigError("unknown reproduce target '" + target + "'");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (!ec) {
    std::ofstream out(out_dir / "report.txt");
    if (out) write_report(out, report);
  }
  return report;
}

}  // namespace rfrk::harness
