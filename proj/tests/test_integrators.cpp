#include <gtest/gtest.h>

#include <cmath>

#include "properties.hpp"
#include "rfrk/integrators.hpp"
#include "rfrk/problems.hpp"
#include "test_util.hpp"

using namespace rfrk;
using rfrk::test::vec;

namespace {

const Rhs<double> kZero = [](double, const State<double>& u) -> State<double> {
  return State<double>::Zero(u.size());
};

Rhs<double> constant_rhs(const State<double>& f) {
  return [f](double, const State<double>&) -> State<double> { return f; };
}

// e1 on the first stage (t = 0), e2 afterwards: orthogonal SSPRK22 stages.
const Rhs<double> kOrthogonalStages = [](double t, const State<double>&) -> State<double> {
  return t == 0.0 ? vec({1.0, 0.0}) : vec({0.0, 1.0});
};

}  // namespace

TEST(ComputeStages, ZeroRhs) {
  const auto t = builtin_tableau("RK44");
  const auto u = vec({1.0, -2.0, 3.0});
  const auto sd = compute_stages(t, kZero, 0.0, u, 0.3);
  EXPECT_TRUE(sd.f.isZero(0.0));
  for (int j = 0; j < 4; ++j) EXPECT_EQ(sd.y.col(j), u);
  EXPECT_TRUE(sd.gram.isZero(0.0));
}

TEST(ComputeStages, ConstantRhsGivesQuadratureNodes) {
  const auto f = vec({2.0, -1.0});
  const auto u = vec({0.5, 0.25});
  for (const auto& name : builtin_scheme_names()) {
    const auto t = builtin_tableau(name);
    const auto sd = compute_stages(t, constant_rhs(f), 0.0, u, 0.2);
    for (int j = 0; j < t.stages(); ++j) {
      EXPECT_EQ(sd.f.col(j), f);
      EXPECT_LE((sd.y.col(j) - (u + 0.2 * t.c()(j) * f)).cwiseAbs().maxCoeff(), 1e-15) << name;
    }
  }
}

TEST(ComputeStages, OscillatorRecurrence) {
  const auto p = oscillator_problem();
  const auto sd = compute_stages(builtin_tableau("RK44"), p.rhs, 0.0, vec({1.0, 0.0}), 0.1);
  EXPECT_EQ(sd.f.col(0), vec({0.0, 1.0}));
  EXPECT_EQ(sd.y.col(1), vec({1.0, 0.05}));
  const double n2 = 1.0 + 0.05 * 0.05;
  EXPECT_DOUBLE_EQ(sd.f(0, 1), -0.05 / n2);
  EXPECT_DOUBLE_EQ(sd.f(1, 1), 1.0 / n2);
  // <y_j, f_j> vanishes for this problem
  EXPECT_LE(sd.uf_terms.cwiseAbs().maxCoeff(), 1e-16);
}

TEST(ComputeStages, NonFiniteDerivativeThrows) {
  const Rhs<double> bad = [](double, const State<double>&) -> State<double> {
    return vec({std::nan(""), 0.0});
  };
  EXPECT_THROW(compute_stages(builtin_tableau("RK44"), bad, 0.0, vec({1.0, 0.0}), 0.1),
               NonFiniteError);
}

TEST(ComputeStages, WrongLengthDerivativeThrows) {
  const Rhs<double> bad = [](double, const State<double>&) -> State<double> {
    return vec({1.0});
  };
  EXPECT_THROW(compute_stages(builtin_tableau("RK44"), bad, 0.0, vec({1.0, 0.0}), 0.1),
               LengthMismatchError);
}

TEST(EnergyDrift, EqualStagesVanish) {
  const auto f = vec({3.0, -4.0});
  for (const auto& name : builtin_scheme_names()) {
    const auto t = builtin_tableau(name);
    const double dt = 0.37;
    const auto sd = compute_stages(t, constant_rhs(f), 0.0, vec({1.0, 1.0}), dt);
    EXPECT_LE(std::abs(energy_drift(t, sd, dt)), 1e-13 * dt * dt * energy(f)) << name;
  }
}

TEST(EnergyDrift, ZeroStages) {
  const auto t = builtin_tableau("RK44");
  EXPECT_EQ(energy_drift(t, compute_stages(t, kZero, 0.0, vec({1.0}), 0.5), 0.5), 0.0);
}

TEST(EnergyDrift, MatchesOscillatorEnergyChange) {
  const auto t = builtin_tableau("RK44");
  const auto p = oscillator_problem();
  const auto u = vec({1.0, 0.0});
  const auto sd = compute_stages(t, p.rhs, 0.0, u, 0.1);
  const auto next = classical_step(t, sd, u, 0.0, 0.1);
  EXPECT_NEAR(energy_drift(t, sd, 0.1), next.energy - energy(u), 1e-15);
}

TEST(ClassicalStep, ZeroAndConstantRhs) {
  const auto u = vec({1.0, 2.0});
  for (const auto& name : builtin_scheme_names()) {
    const auto t = builtin_tableau(name);
    const auto still = step<double>(Method::classical, t, nullptr, kZero, 0.0, u, 0.4);
    EXPECT_EQ(still.state, u);
    const auto f = vec({-1.0, 0.5});
    const auto moved = step<double>(Method::classical, t, nullptr, constant_rhs(f), 0.0, u, 0.4);
    EXPECT_LE((moved.state - (u + 0.4 * f)).cwiseAbs().maxCoeff(), 1e-15) << name;
    EXPECT_EQ(moved.effective_dt, 0.4);
    EXPECT_FALSE(moved.epsilon);
    EXPECT_FALSE(moved.gamma);
  }
}

TEST(ClassicalStep, OscillatorEnergyGrows) {
  const auto p = oscillator_problem();
  const auto r =
      step<double>(Method::classical, builtin_tableau("RK44"), nullptr, p.rhs, 0.0, p.initial, 0.1);
  EXPECT_GT(r.energy, 1.0);
}

TEST(Gamma, EqualStagesGiveOne) {
  const auto f = vec({0.3, 0.7});
  for (const auto& name : builtin_scheme_names()) {
    const auto t = builtin_tableau(name);
    const auto sd = compute_stages(t, constant_rhs(f), 0.0, vec({1.0, 1.0}), 0.25);
    EXPECT_NEAR(gamma_relaxation(t, sd), 1.0, 1e-14) << name;
  }
}

TEST(Gamma, ZeroStagesDegenerateBranch) {
  const auto t = builtin_tableau("RK44");
  EXPECT_EQ(gamma_relaxation(t, compute_stages(t, kZero, 0.0, vec({1.0}), 0.5)), 1.0);
}

TEST(Gamma, DissipativeSystemFirstStep) {
  const auto p = dissipative_system();
  const auto t = builtin_tableau("RK44");
  const double gamma = gamma_relaxation(t, compute_stages(t, p.rhs, 0.0, p.initial, 0.5));
  EXPECT_NEAR(gamma, 0.88, 0.01);
  EXPECT_NEAR(gamma * 0.5, 0.44, 0.01);
}

TEST(RelaxationStep, ZeroRhsAdvancesFullStep) {
  const auto u = vec({1.0, 2.0});
  const auto r = step<double>(Method::relaxation, builtin_tableau("RK44"), nullptr, kZero, 1.0, u, 0.3);
  EXPECT_EQ(r.state, u);
  EXPECT_EQ(*r.gamma, 1.0);
  EXPECT_DOUBLE_EQ(r.t, 1.3);
}

TEST(RelaxationStep, ConservesEnergyOnConservativeProblems) {
  const auto grid = fourier_grid(32);
  auto adv = advection_problem(grid);
  adv.initial = white_noise_init(32, 5);
  for (const auto& p : {oscillator_problem(), burgers_problem(), adv}) {
    for (const auto& name : builtin_scheme_names()) {
      for (const Method m : {Method::relaxation, Method::idt}) {
        const auto r = step<double>(m, builtin_tableau(name), nullptr, p.rhs, 0.0, p.initial, 0.05);
        EXPECT_LE(std::abs(r.energy - energy(p.initial)), 1e-12 * energy(p.initial))
            << p.name << " " << name;
      }
    }
  }
}

TEST(RelaxationStep, DissipativeEffectiveStep) {
  const auto p = dissipative_system();
  const auto r = step<double>(Method::relaxation, builtin_tableau("RK44"), nullptr, p.rhs, 0.0,
                              p.initial, 0.7);
  EXPECT_NEAR(r.effective_dt, 0.42, 0.01);
  EXPECT_DOUBLE_EQ(r.t, r.effective_dt);
}

TEST(RelaxationStep, StallsOnOrthogonalStages) {
  const auto t = builtin_tableau("SSPRK22");
  EXPECT_THROW(step<double>(Method::relaxation, t, nullptr, kOrthogonalStages, 0.0,
                            vec({0.0, 0.0}), 1.0),
               StalledRelaxationError);
}

TEST(IdtStep, TimeAdvancesByDt) {
  const auto p = dissipative_system();
  const auto r = step<double>(Method::idt, builtin_tableau("RK44"), nullptr, p.rhs, 2.0,
                              p.initial, 0.5);
  EXPECT_EQ(r.t, 2.5);
  EXPECT_EQ(r.effective_dt, 0.5);
  ASSERT_TRUE(r.gamma);
  EXPECT_NEAR(*r.gamma, 0.88, 0.01);
}

TEST(EpsilonCoefficients, EqualStages) {
  const auto f = vec({1.0, -2.0});
  for (const auto& name : builtin_scheme_names()) {
    const auto t = builtin_tableau(name);
    const auto k = validate_k(t, default_k(name));
    const auto q = epsilon_coefficients(t, k, compute_stages(t, constant_rhs(f), 0.0, f, 0.3));
    EXPECT_LE(std::abs(q.quadratic), 1e-13) << name;
    EXPECT_LE(std::abs(q.constant), 1e-13) << name;
  }
}

TEST(EpsilonCoefficients, ZeroStages) {
  const auto t = builtin_tableau("RK44");
  const auto k = validate_k(t, default_k("RK44"));
  const auto q = epsilon_coefficients(t, k, compute_stages(t, kZero, 0.0, vec({1.0}), 0.3));
  EXPECT_EQ(q.quadratic, 0.0);
  EXPECT_EQ(q.linear, 0.0);
  EXPECT_EQ(q.constant, 0.0);
}

TEST(EpsilonCoefficients, ConstantTermIsClassicalEnergyChange) {
  const auto t = builtin_tableau("RK44");
  const auto k = validate_k(t, default_k("RK44"));
  const auto p = oscillator_problem();
  const auto sd = compute_stages(t, p.rhs, 0.0, p.initial, 0.1);
  const auto q = epsilon_coefficients(t, k, sd);
  const double measured = classical_step(t, sd, p.initial, 0.0, 0.1).energy - 1.0;
  EXPECT_NEAR(q.constant * 0.01, measured, 1e-13);
}

TEST(SolveEpsilon, Examples) {
  auto make = [](double a, double b, double c) {
    return QuadraticCoeffs<double>{a, b, c, b * b - 4 * a * c};
  };
  EXPECT_EQ(*solve_epsilon(make(0.0, 3.0, 0.0), 1e-14), 0.0);
  EXPECT_EQ(*solve_epsilon(make(0.0, -7.0, 0.0), 1e-14), 0.0);
  EXPECT_DOUBLE_EQ(*solve_epsilon(make(1.0, -3.0, 2.0), 1e-14), 1.0);
  EXPECT_FALSE(solve_epsilon(make(1.0, 0.0, 1.0), 1e-14));
  EXPECT_DOUBLE_EQ(*solve_epsilon(make(0.0, 2.0, -1.0), 1e-14), 0.5);
  EXPECT_FALSE(solve_epsilon(make(0.0, 0.0, 1.0), 1e-14));
  EXPECT_EQ(*solve_epsilon(make(0.0, 0.0, 0.0), 1e-14), 0.0);
}

TEST(SolveEpsilon, AvoidsCancellation) {
  // roots 1e-9 and 1e9
  const QuadraticCoeffs<double> q{1.0, -(1e9 + 1e-9), 1.0, (1e9 + 1e-9) * (1e9 + 1e-9) - 4.0};
  EXPECT_NEAR(*solve_epsilon(q, 1e-14), 1e-9, 1e-24);
}

TEST(SolveEpsilon, RandomTriples) {
  const auto r = rfrk::test::quadratic_solver_property(2024, 2000);
  EXPECT_TRUE(r.ok()) << r.failures << " failures, first: " << r.first_failure;
}

TEST(RelaxationFreeStep, ZeroRhs) {
  const auto t = builtin_tableau("RK44");
  const auto k = validate_k(t, default_k("RK44"));
  const auto u = vec({1.0, 2.0});
  const auto r = step<double>(Method::relaxation_free, t, &k, kZero, 0.0, u, 0.5);
  EXPECT_EQ(*r.epsilon, 0.0);
  EXPECT_EQ(r.state, u);
  EXPECT_EQ(r.effective_dt, 0.5);
}

TEST(RelaxationFreeStep, ConservesEnergyOnConservativeProblems) {
  const auto grid = fourier_grid(32);
  auto adv = advection_problem(grid);
  adv.initial = white_noise_init(32, 9);
  for (const auto& p : {oscillator_problem(), burgers_problem(), adv}) {
    for (const auto& name : builtin_scheme_names()) {
      const auto t = builtin_tableau(name);
      const auto k = validate_k(t, default_k(name));
      const auto r = step<double>(Method::relaxation_free, t, &k, p.rhs, 0.0, p.initial, 0.05);
      EXPECT_LE(std::abs(r.energy - energy(p.initial)), 1e-12 * energy(p.initial))
          << p.name << " " << name;
      EXPECT_EQ(r.effective_dt, 0.05);
    }
  }
}

TEST(RelaxationFreeStep, NoRealRootOnOrthogonalStages) {
  const auto t = builtin_tableau("SSPRK22");
  const auto k = validate_k(t, default_k("SSPRK22"));
  const auto q = epsilon_coefficients(t, k, compute_stages(t, kOrthogonalStages, 0.0,
                                                            vec({0.0, 0.0}), 1.0));
  EXPECT_DOUBLE_EQ(q.discriminant, -4.0);
  EXPECT_THROW(step<double>(Method::relaxation_free, t, &k, kOrthogonalStages, 0.0,
                            vec({0.0, 0.0}), 1.0),
               NoRealRootError);
}

TEST(RelaxationFreeStep, NeedsKVector) {
  const auto t = builtin_tableau("RK44");
  EXPECT_THROW(step<double>(Method::relaxation_free, t, nullptr, kZero, 0.0, vec({1.0}), 0.1),
               std::invalid_argument);
}

TEST(Integrate, ZeroRhsConstantTrajectory) {
  const auto u = vec({1.0, -1.0, 0.5});
  for (const auto& name : builtin_scheme_names()) {
    const auto t = builtin_tableau(name);
    const auto k = validate_k(t, default_k(name));
    for (const Method m :
         {Method::classical, Method::idt, Method::relaxation, Method::relaxation_free}) {
      const auto traj = integrate<double>(kZero, m, t, k, u, 0.0, 0.25, 1.0);
      ASSERT_EQ(traj.size(), 5u);
      for (const auto& r : traj) EXPECT_EQ(r.state, u);
      EXPECT_DOUBLE_EQ(traj.back().t, 1.0);
    }
  }
}

TEST(Integrate, OscillatorRelaxationFreeRK44) {
  const auto p = oscillator_problem();
  const auto t = builtin_tableau("RK44");
  const auto k = validate_k(t, default_k("RK44"));
  const auto traj = integrate<double>(p.rhs, Method::relaxation_free, t, k, p.initial, 0.0, 0.1, 10.0);
  ASSERT_EQ(traj.size(), 101u);
  const auto& last = traj.back();
  EXPECT_DOUBLE_EQ(last.t, 10.0);
  EXPECT_LE((last.state - p.exact(10.0)).norm(), 10.0 * std::pow(0.1, 4));
  for (const auto& r : traj) {
    EXPECT_NEAR(r.energy, 1.0, 1e-11);
    if (r.step > 0) {
      EXPECT_GE(*r.epsilon, -0.0015);
      EXPECT_LE(*r.epsilon, 0.0);
    }
  }
}

TEST(Integrate, BurgersClassicalSSPRK22EnergyIncreases) {
  const auto p = burgers_problem();
  const auto t = builtin_tableau("SSPRK22");
  const double dt = 2.0 / std::ceil(2.0 / (0.3 * burgers_dx()));
  const auto traj = integrate<double>(p.rhs, Method::classical, t, std::nullopt, p.initial, 0.0, dt, 2.0);
  for (std::size_t i = 1; i < traj.size(); ++i) EXPECT_GT(traj[i].energy, traj[i - 1].energy);
}

TEST(Integrate, RecordStrideKeepsLastAndObserverSeesAll) {
  const auto p = oscillator_problem();
  const auto t = builtin_tableau("SSPRK33");
  std::size_t seen = 0;
  const auto traj = integrate<double>(p.rhs, Method::classical, t, std::nullopt, p.initial, 0.0, 0.1,
                                      1.0, 3, [&seen](const StepRecord<double>&) { ++seen; });
  EXPECT_EQ(seen, 11u);
  std::vector<std::size_t> steps;
  for (const auto& r : traj) steps.push_back(r.step);
  EXPECT_EQ(steps, (std::vector<std::size_t>{0, 3, 6, 9, 10}));
}

TEST(Integrate, RelaxationLandsAtOrPastEnd) {
  const auto p = dissipative_system();
  const auto traj = integrate<double>(p.rhs, Method::relaxation, builtin_tableau("RK44"),
                                      std::nullopt, p.initial, 0.0, 0.5, 0.5);
  EXPECT_EQ(traj.size(), 3u);  // 0.44 + 0.4x
  EXPECT_GE(traj.back().t, 0.5 - 1e-12);
  EXPECT_NEAR(traj[1].effective_dt, 0.44, 0.01);
}

TEST(Integrate, FailureCarriesStepAndCause) {
  const Rhs<double> blows_up = [](double t, const State<double>& u) -> State<double> {
    if (t > 0.25) return State<double>::Constant(u.size(), INFINITY);
    return -u;
  };
  try {
    integrate<double>(blows_up, Method::classical, builtin_tableau("SSPRK22"), std::nullopt,
                      vec({1.0}), 0.0, 0.1, 1.0);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.step(), 3u);
    EXPECT_DOUBLE_EQ(e.time(), 0.2);
    EXPECT_EQ(e.cause(), IntegrationError::Cause::non_finite);
  }
}

TEST(Integrate, FailureIsReportedForRootAndStall) {
  const auto t = builtin_tableau("SSPRK22");
  const auto k = validate_k(t, default_k("SSPRK22"));
  try {
    integrate<double>(kOrthogonalStages, Method::relaxation_free, t, k, vec({0.0, 0.0}), 0.0, 1.0, 2.0);
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.cause(), IntegrationError::Cause::no_real_root);
    EXPECT_EQ(e.step(), 1u);
  }
  try {
    integrate<double>(kOrthogonalStages, Method::relaxation, t, std::nullopt, vec({0.0, 0.0}), 0.0, 1.0, 2.0);
    FAIL();
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.cause(), IntegrationError::Cause::stalled_relaxation);
  }
}

TEST(Integrate, RejectsUnevenStepCount) {
  const auto p = oscillator_problem();
  EXPECT_THROW(integrate<double>(p.rhs, Method::classical, builtin_tableau("RK44"), std::nullopt,
                                 p.initial, 0.0, 0.3, 1.0),
               std::invalid_argument);
  EXPECT_EQ(fixed_step_count(0.0, 0.1, 1.0), 10u);
}

TEST(Convergence, OscillatorSlopes) {
  const auto p = oscillator_problem();
  std::vector<double> dts;
  for (int i = 0; i <= 5; ++i) dts.push_back(0.1 * std::ldexp(1.0, -i));
  const auto rk44 = builtin_tableau("RK44");
  const auto classical = convergence_study<double>(p.rhs, p.exact, Method::classical, rk44,
                                                   std::nullopt, p.initial, 0.0, 10.0, dts);
  EXPECT_NEAR(classical.slope, 4.0, 0.2);
  const auto rf = convergence_study<double>(p.rhs, p.exact, Method::relaxation_free, rk44,
                                            validate_k(rk44, default_k("RK44")), p.initial, 0.0,
                                            10.0, dts);
  EXPECT_GE(rf.slope, 3.8);
  const auto ssp33 = builtin_tableau("SSPRK33");
  const auto third = convergence_study<double>(p.rhs, p.exact, Method::classical, ssp33,
                                               std::nullopt, p.initial, 0.0, 10.0, dts);
  EXPECT_NEAR(third.slope, 3.0, 0.2);
}

TEST(Convergence, BurgersIdtLosesAnOrder) {
  const auto p = burgers_problem();
  const auto exact = reference_solution(p);
  std::vector<double> dts;
  for (int i = 0; i <= 6; ++i) {
    dts.push_back(0.2 / std::ceil(0.2 / (0.3 * std::ldexp(1.0, -i) * burgers_dx())));
  }
  const auto t = builtin_tableau("RK44");
  const auto idt = convergence_study<double>(p.rhs, exact, Method::idt, t, std::nullopt,
                                             p.initial, 0.0, 0.2, dts);
  EXPECT_NEAR(idt.slope, 3.0, 0.3);
  const auto rf = convergence_study<double>(p.rhs, exact, Method::relaxation_free, t,
                                            validate_k(t, default_k("RK44")), p.initial, 0.0,
                                            0.2, dts);
  EXPECT_GE(rf.slope, 3.8);
}

TEST(Convergence, RoundoffPointsAreExcludedAndTooFewThrow) {
  const Rhs<double> zero = [](double, const State<double>& u) -> State<double> {
    return State<double>::Zero(u.size());
  };
  const auto exact = [](double) { return vec({1.0}); };
  EXPECT_THROW(convergence_study<double>(zero, exact, Method::classical, builtin_tableau("RK44"),
                                         std::nullopt, vec({1.0}), 0.0, 1.0, {0.5, 0.25}),
               ConvergenceError);
  EXPECT_NEAR(log_log_slope<double>({1.0, 2.0, 4.0}, {1.0, 8.0, 64.0}), 3.0, 1e-14);
}

TEST(EnergyIdentity, RandomSteps) {
  const auto r = rfrk::test::energy_identity_property(99, 300);
  EXPECT_TRUE(r.ok()) << r.failures << " failures, first: " << r.first_failure;
}

TEST(Integrate, LongDoubleOscillator) {
  const auto t = builtin_tableau("RK44").cast<long double>();
  const auto k = validate_k(t, Vector<long double>(default_k("RK44").cast<long double>()));
  const Rhs<long double> rhs = [](long double, const State<long double>& u) {
    const long double n2 = u(0) * u(0) + u(1) * u(1);
    State<long double> f(2);
    f << -u(1) / n2, u(0) / n2;
    return f;
  };
  const auto traj = integrate<long double>(rhs, Method::relaxation_free, t, k,
                                           vec<long double>({1.0L, 0.0L}), 0.0L, 0.1L, 1.0L);
  EXPECT_LE(std::abs(traj.back().energy - 1.0L), 1e-17L);
}
