#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rfrk/harness.hpp"

using namespace rfrk;
using namespace rfrk::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::path(::testing::TempDir()) / "rfrk_harness" / info->name() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

ExperimentConfig config(ConfigEntries e, const fs::path& out) {
  e["out"] = out.string();
  return make_config(e);
}

}  // namespace

TEST(Config, ReadsFileAndFlagsWin) {
  const auto dir = scratch("cfg");
  fs::create_directories(dir);
  const auto path = dir / "osc.cfg";
  std::ofstream(path) << "# oscillator golden\nexperiment = oscillator\nscheme=SSPRK33\n"
                         "mode = rf   # relaxation-free\ndt = 0.1\nt_end = 10\n\n";
  const auto base = read_config_file(path);
  EXPECT_EQ(base.at("scheme"), "SSPRK33");
  EXPECT_EQ(base.at("mode"), "rf");

  const auto merged = merge_entries(base, {{"scheme", "RK44"}, {"dt", "0.05"}});
  const auto cfg = make_config(merged);
  EXPECT_EQ(cfg.scheme, "RK44");
  EXPECT_EQ(cfg.method, Method::relaxation_free);
  EXPECT_EQ(cfg.step_value, 0.05);
  EXPECT_EQ(cfg.t_end, 10.0);
}

TEST(Config, StepOverrideReplacesOtherStepKeys) {
  const auto merged = merge_entries({{"experiment", "advection-noise"}, {"dt", "0.1"}},
                                    {{"mu", "0.9"}});
  EXPECT_EQ(merged.count("dt"), 0u);
  const auto cfg = make_config(merged);
  EXPECT_EQ(cfg.convention, StepConvention::mu);
}

TEST(Config, Rejections) {
  EXPECT_THROW(make_config({{"experiment", "oscillator"}}), ConfigError);  // no dt
  EXPECT_THROW(make_config({{"experiment", "oscillator"}, {"dt", "0.1"}, {"mu", "0.5"}}),
               ConfigError);
  EXPECT_THROW(make_config({{"experiment", "advection-noise"}, {"dt", "0.1"}}), ConfigError);
  EXPECT_THROW(make_config({{"experiment", "burgers"}, {"mu", "0.3"}}), ConfigError);
  EXPECT_THROW(make_config({{"experiment", "stability-regions"}, {"dt", "0.3"}}), ConfigError);
  EXPECT_THROW(make_config({{"experiment", "oscillator"}, {"dt", "-1"}}), ConfigError);
  EXPECT_THROW(make_config({{"experiment", "oscillator"}, {"dt", "abc"}}), ConfigError);
  EXPECT_THROW(make_config({{"experiment", "warp"}, {"dt", "0.1"}}), ConfigError);
  EXPECT_THROW(make_config({{"experiment", "oscillator"}, {"dt", "0.1"}, {"colour", "red"}}),
               ConfigError);
  EXPECT_THROW(make_config({{"experiment", "oscillator"}, {"dt", "0.1"}, {"scheme", "RK45"}}),
               ConfigError);
  EXPECT_THROW(make_config({{"experiment", "oscillator"}, {"dt", "0.1"}, {"mode", "rf"},
                            {"k", "1,-1,-1,1"}}),
               ConfigError);
  EXPECT_THROW(make_config({{"experiment", "advection-noise"}, {"mu", "0.5"},
                            {"scheme", "SSPRK22"}}),
               ConfigError);
  EXPECT_THROW(read_config_file("/nonexistent/rfrk.cfg"), ConfigError);
}

TEST(Config, AcceptsKOverride) {
  const auto cfg = make_config({{"experiment", "oscillator"}, {"dt", "0.1"}, {"mode", "rf"},
                                {"k", "2, 4, -4, -2"}});
  ASSERT_TRUE(cfg.k);
  EXPECT_EQ(cfg.k->size(), 4);
  EXPECT_EQ((*cfg.k)(1), 4.0);
}

TEST(Run, OscillatorRelaxationFree) {
  const auto out = scratch("osc");
  const auto s = run(config({{"experiment", "oscillator"}, {"scheme", "RK44"}, {"mode", "rf"},
                             {"dt", "0.1"}, {"t_end", "100"}},
                            out));
  EXPECT_FALSE(s.failure);
  EXPECT_EQ(s.steps, 1000u);
  EXPECT_DOUBLE_EQ(s.final_time, 100.0);
  EXPECT_LE(std::abs(s.energy_drift), 1e-10);
  EXPECT_LE(*s.max_abs_epsilon, 0.0015);
  EXPECT_TRUE(s.effective_dt_equals_dt);
  ASSERT_TRUE(s.error);
  EXPECT_LT(*s.error, 1e-2);
  EXPECT_EQ(first_line(out / "timeseries.csv"), "step,t,energy,epsilon,gamma,effective_dt,u0,u1");
  EXPECT_TRUE(fs::exists(out / "summary.txt"));
}

TEST(Run, DissipativeRelaxationFirstStep) {
  const auto s = run(config({{"experiment", "dissipative"}, {"mode", "r"}, {"dt", "0.7"},
                             {"t_end", "0.7"}},
                            scratch("diss")));
  EXPECT_NEAR(*s.first_effective_dt, 0.42, 0.01);
  EXPECT_FALSE(s.effective_dt_equals_dt);
  EXPECT_TRUE(s.min_gamma);
}

TEST(Run, BurgersClassicalEnergyIncreasesForSSPRK22) {
  const auto out = scratch("burgers");
  const auto s = run(config({{"experiment", "burgers"}, {"scheme", "SSPRK22"}, {"cfl", "0.3"},
                             {"t_end", "2"}},
                            out));
  EXPECT_GT(s.energy_drift, 0.0);
  EXPECT_EQ(s.energy_trend, 1);
  EXPECT_EQ(first_line(out / "profile.csv"), "x,u_initial,u_final");
}

TEST(Run, BurgersClassicalSSPRK33EnergyDecreases) {
  const auto s = run(config({{"experiment", "burgers"}, {"scheme", "SSPRK33"}, {"cfl", "0.3"},
                             {"t_end", "2"}},
                            scratch("burgers33")));
  EXPECT_LT(s.energy_drift, 0.0);
  EXPECT_EQ(s.energy_trend, -1);
}

TEST(Run, AdvectionWritesModes) {
  const auto out = scratch("adv");
  const auto s = run(config({{"experiment", "advection-noise"}, {"mu", "0.9"}, {"seed", "7"},
                             {"points", "32"}},
                            out));
  EXPECT_FALSE(s.failure);
  EXPECT_EQ(first_line(out / "modes.csv"), "k,amp_initial,amp_final,rel_amp");
  EXPECT_LT(s.energy_drift, 0.0);
}

TEST(Run, IdenticalConfigsGiveIdenticalBytes) {
  const ConfigEntries e = {{"experiment", "advection-noise"}, {"mode", "rf"}, {"mu", "0.6"},
                           {"seed", "3"}, {"points", "32"}, {"record_every", "4"}};
  const auto a = scratch("a"), b = scratch("b");
  run(config(e, a));
  run(config(e, b));
  for (const char* f : {"timeseries.csv", "modes.csv", "profile.csv", "summary.txt"}) {
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Run, FailureIsRecordedNotThrown) {
  // dt far beyond the stability limit: the classical run overflows.
  const auto s = run(config({{"experiment", "dissipative"}, {"dt", "20"}, {"t_end", "20000"}},
                            scratch("boom")));
  ASSERT_TRUE(s.failure);
  EXPECT_GT(s.failure->step, 1u);
  EXPECT_FALSE(s.failure->reason.empty());
}

TEST(Run, StabilityRegions) {
  const auto out = scratch("regions");
  ExperimentConfig cfg;
  cfg.experiment = Experiment::stability_regions;
  cfg.scheme = "RK44";
  cfg.points = 11;
  cfg.output = out;
  run(cfg);
  int grids = 0;
  for (const auto& entry : fs::directory_iterator(out)) {
    if (entry.path().filename().string().rfind("region_RK44_eps", 0) == 0) {
      ++grids;
      EXPECT_EQ(first_line(entry.path()), "re,im,absR");
    }
  }
  EXPECT_EQ(grids, 5);
  EXPECT_EQ(first_line(out / "limits.csv"), "epsilon,imaginary_limit");
}

TEST(ConvergenceTable, OscillatorAndBurgers) {
  const auto osc = convergence_table("oscillator", {"SSPRK33"}, Method::classical);
  EXPECT_EQ(osc.rows.size(), 6u);
  EXPECT_NEAR(*osc.slopes.at("SSPRK33"), 3.0, 0.2);

  const auto idt = convergence_table("burgers", {"RK44"}, Method::idt);
  EXPECT_EQ(idt.rows.size(), 7u);
  EXPECT_NEAR(*idt.slopes.at("RK44"), 3.0, 0.3);
  const auto rf = convergence_table("burgers", {"RK44"}, Method::relaxation_free);
  EXPECT_GE(*rf.slopes.at("RK44"), 3.8);

  std::ostringstream csv;
  write_convergence_csv(csv, rf);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "scheme,dt,final_time,error,used_in_fit,failure");
  EXPECT_THROW(convergence_table("lorenz", {"RK44"}, Method::classical), ConfigError);
}

TEST(Reproduce, Table1Passes) {
  const auto out = scratch("table1");
  const auto report = reproduce("table1", out);
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.checks.size(), 8u);
  EXPECT_TRUE(fs::exists(out / "report.txt"));
  EXPECT_TRUE(fs::exists(out / "table1.csv"));
  std::ostringstream text;
  write_report(text, report);
  EXPECT_NE(text.str().find("PASS\t1\t"), std::string::npos);
  EXPECT_EQ(text.str().find("FAIL"), std::string::npos);
}

TEST(Reproduce, UnknownTarget) {
  EXPECT_THROW(reproduce("fig99", scratch("x")), ConfigError);
  const auto targets = reproduce_targets();
  EXPECT_NE(std::find(targets.begin(), targets.end(), "all"), targets.end());
}

TEST(Format, SeventeenDigits) {
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
  EXPECT_EQ(std::stod(fmt17(1.0 / 3.0)), 1.0 / 3.0);
}
