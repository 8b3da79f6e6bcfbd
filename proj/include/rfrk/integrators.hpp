#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rfrk/error.hpp"
#include "rfrk/state_space.hpp"
#include "rfrk/tableau.hpp"
#include "rfrk/types.hpp"

namespace rfrk {

/// classical: b as given. idt: gamma*b with the full dt. relaxation: gamma*b
/// and time advances by gamma*dt. relaxation_free: b + eps*k with the full dt.
enum class Method { classical, idt, relaxation, relaxation_free };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::classical: return "classical";
    case Method::idt: return "idt";
    case Method::relaxation: return "r";
    case Method::relaxation_free: return "rf";
  }
  return "?";
}

inline Method parse_method(std::string_view name) {
  if (name == "classical" || name == "rk") return Method::classical;
  if (name == "idt") return Method::idt;
  if (name == "r" || name == "rrk") return Method::relaxation;
  if (name == "rf" || name == "rfrk") return Method::relaxation_free;
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

template <typename Scalar>
using Rhs = std::function<State<Scalar>(Scalar, const State<Scalar>&)>;

/// Stage solutions y_j and derivatives f_j of one step (as matrix columns),
/// the Gram matrix of the derivatives and the diagnostic terms <y_j, f_j>.
template <typename Scalar>
struct StageData {
  Matrix<Scalar> y;
  Matrix<Scalar> f;
  Matrix<Scalar> gram;
  Vector<Scalar> uf_terms;
};

/// One accepted step. `step` is 0 for the initial state. At most one of
/// epsilon (RF) and gamma (R, IDT) is set.
template <typename Scalar>
struct StepRecord {
  std::size_t step = 0;
  Scalar t{};
  State<Scalar> state;
  Scalar energy{};
  std::optional<Scalar> epsilon;
  std::optional<Scalar> gamma;
  Scalar effective_dt{};
};

/// quadratic*eps^2 + linear*eps + constant = 0
template <typename Scalar>
struct QuadraticCoeffs {
  Scalar quadratic;
  Scalar linear;
  Scalar constant;
  Scalar discriminant;
};

namespace detail {

// sum_ij x_i m_ij g_ij
template <typename Scalar>
Scalar weighted_sum(const Vector<Scalar>& x, const Matrix<Scalar>& m, const Matrix<Scalar>& g) {
  Scalar sum(0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (x(i) == Scalar(0)) continue;
    Scalar row(0);
    for (Eigen::Index j = 0; j < m.cols(); ++j) row += m(i, j) * g(i, j);
    sum += x(i) * row;
  }
  return sum;
}

// sum_ij x_i y_j g_ij
template <typename Scalar>
Scalar bilinear(const Vector<Scalar>& x, const Matrix<Scalar>& g, const Vector<Scalar>& y) {
  return x.dot(g * y);
}

template <typename Scalar>
void require_finite(const State<Scalar>& u, const char* what) {
  if (!u.allFinite()) throw NonFiniteError(std::string(what) + " is not finite");
}

}  // namespace detail

template <typename Scalar>
StageData<Scalar> compute_stages(const ButcherTableau<Scalar>& t, const Rhs<Scalar>& rhs,
                                 Scalar tn, const State<Scalar>& u, Scalar dt) {
  if (!(dt > Scalar(0))) throw std::invalid_argument("step size must be positive");
  const auto s = t.stages();
  const auto m = u.size();
  StageData<Scalar> sd;
  sd.y.resize(m, s);
  sd.f.resize(m, s);
  sd.uf_terms.resize(s);
  for (int i = 0; i < s; ++i) {
    sd.y.col(i) = linear_combination(u, dt, t.a().row(i).head(i).transpose(),
                                     sd.f.leftCols(i));
    State<Scalar> fi = rhs(tn + t.c()(i) * dt, sd.y.col(i));
    if (fi.size() != m) throw LengthMismatchError(fi.size(), m);
    detail::require_finite(fi, "stage derivative");
    sd.f.col(i) = fi;
    sd.uf_terms(i) = inner(sd.y.col(i), sd.f.col(i));
  }
  sd.gram = gram(sd.f);
  return sd;
}

/// Integrator-induced energy change of a classical step:
/// dt^2 (-2 sum b_i a_ij G_ij + sum b_i b_j G_ij).
template <typename Scalar>
Scalar energy_drift(const ButcherTableau<Scalar>& t, const StageData<Scalar>& sd, Scalar dt) {
  const auto& g = sd.gram;
  return dt * dt *
         (Scalar(-2) * detail::weighted_sum(t.b(), t.a(), g) + detail::bilinear(t.b(), g, t.b()));
}

/// Semi-discretization part of a step's energy change, 2 dt sum w_j <y_j, f_j>.
/// Diagnostic only; the gamma/eps algebra uses Gram terms alone.
template <typename Scalar>
Scalar physical_energy_term(const Vector<Scalar>& weights, const StageData<Scalar>& sd,
                            Scalar dt) {
  return Scalar(2) * dt * weights.dot(sd.uf_terms);
}

template <typename Scalar>
StepRecord<Scalar> make_record(Scalar t_end, State<Scalar> state, Scalar effective_dt) {
  detail::require_finite(state, "updated state");
  StepRecord<Scalar> r;
  r.t = t_end;
  r.energy = energy(state);
  r.state = std::move(state);
  r.effective_dt = effective_dt;
  return r;
}

template <typename Scalar>
StepRecord<Scalar> classical_step(const ButcherTableau<Scalar>& t, const StageData<Scalar>& sd,
                                  const State<Scalar>& u, Scalar tn, Scalar dt) {
  return make_record(tn + dt, linear_combination(u, dt, t.b(), sd.f), dt);
}

inline constexpr double kGammaDegenerateTol = 1e-28;
inline constexpr double kGammaStallTol = 1e-8;

/// gamma = 2 sum b_i a_ij G_ij / sum b_i b_j G_ij, or 1 when the
/// denominator ||sum b_j f_j||^2 is negligible.
template <typename Scalar>
Scalar gamma_relaxation(const ButcherTableau<Scalar>& t, const StageData<Scalar>& sd) {
  const auto& g = sd.gram;
  const Scalar den = detail::bilinear(t.b(), g, t.b());
  const Scalar gmax = g.size() ? g.cwiseAbs().maxCoeff() : Scalar(0);
  if (den <= Scalar(kGammaDegenerateTol) * gmax) return Scalar(1);
  return Scalar(2) * detail::weighted_sum(t.b(), t.a(), g) / den;
}

namespace detail {

template <typename Scalar>
Scalar checked_gamma(const ButcherTableau<Scalar>& t, const StageData<Scalar>& sd) {
  const Scalar gamma = gamma_relaxation(t, sd);
  if (!(gamma > Scalar(kGammaStallTol))) {
    throw StalledRelaxationError(static_cast<double>(gamma));
  }
  return gamma;
}

}  // namespace detail

/// Relaxation step: lands at tn + gamma*dt.
template <typename Scalar>
StepRecord<Scalar> rrk_step(const ButcherTableau<Scalar>& t, const StageData<Scalar>& sd,
                            const State<Scalar>& u, Scalar tn, Scalar dt) {
  const Scalar gamma = detail::checked_gamma(t, sd);
  auto r = make_record(tn + gamma * dt, linear_combination(u, gamma * dt, t.b(), sd.f),
                       gamma * dt);
  r.gamma = gamma;
  return r;
}

/// Same update as rrk_step but time advances by the full dt.
template <typename Scalar>
StepRecord<Scalar> idt_step(const ButcherTableau<Scalar>& t, const StageData<Scalar>& sd,
                            const State<Scalar>& u, Scalar tn, Scalar dt) {
  const Scalar gamma = detail::checked_gamma(t, sd);
  auto r = make_record(tn + dt, linear_combination(u, gamma * dt, t.b(), sd.f), dt);
  r.gamma = gamma;
  return r;
}

template <typename Scalar>
QuadraticCoeffs<Scalar> epsilon_coefficients(const ButcherTableau<Scalar>& t,
                                             const KVector<Scalar>& k,
                                             const StageData<Scalar>& sd) {
  const auto& g = sd.gram;
  const auto& kv = k.k();
  QuadraticCoeffs<Scalar> q;
  q.quadratic = detail::bilinear(kv, g, kv);
  q.linear = Scalar(-2) * detail::weighted_sum(kv, t.a(), g) +
             Scalar(2) * detail::bilinear(kv, g, t.b());
  q.constant = Scalar(-2) * detail::weighted_sum(t.b(), t.a(), g) +
               detail::bilinear(t.b(), g, t.b());
  q.discriminant = q.linear * q.linear - Scalar(4) * q.quadratic * q.constant;
  return q;
}

inline constexpr double kEpsilonDegenerateTol = 1e-14;

/// Absolute near-zero threshold for the quadratic coefficients:
/// 1e-14 * max|k|^2 * max|G|.
template <typename Scalar>
Scalar epsilon_tolerance(const KVector<Scalar>& k, const StageData<Scalar>& sd) {
  const Scalar kmax = k.k().cwiseAbs().maxCoeff();
  const Scalar gmax = sd.gram.size() ? sd.gram.cwiseAbs().maxCoeff() : Scalar(0);
  return Scalar(kEpsilonDegenerateTol) * kmax * kmax * gmax;
}

/// Root of the epsilon quadratic that vanishes with dt, or nullopt when no
/// real root exists.
///
/// With a negligible quadratic term the equation is solved as linear
/// (or gives 0 when all terms vanish). Otherwise the smaller-magnitude root
/// is returned in cancellation-free form C / q with
/// q = -(B + sign(B) sqrt(disc)) / 2.
template <typename Scalar>
std::optional<Scalar> solve_epsilon(const QuadraticCoeffs<Scalar>& q, Scalar tol) {
  using std::abs;
  using std::sqrt;
  if (abs(q.quadratic) <= tol) {
    if (abs(q.linear) <= tol) {
      if (abs(q.constant) <= tol) return Scalar(0);
      return std::nullopt;
    }
    return -q.constant / q.linear;
  }
  if (q.discriminant < Scalar(0)) return std::nullopt;
  const Scalar root = sqrt(q.discriminant);
  const Scalar big = -(q.linear + (q.linear >= Scalar(0) ? root : -root)) / Scalar(2);
  if (big == Scalar(0)) return Scalar(0);
  return q.constant / big;
}

/// Relaxation-free step: weights b + eps*k, time advances by dt.
template <typename Scalar>
StepRecord<Scalar> rfrk_step(const ButcherTableau<Scalar>& t, const KVector<Scalar>& k,
                             const StageData<Scalar>& sd, const State<Scalar>& u, Scalar tn,
                             Scalar dt) {
  const auto q = epsilon_coefficients(t, k, sd);
  const auto eps = solve_epsilon(q, epsilon_tolerance(k, sd));
  if (!eps) throw NoRealRootError(static_cast<double>(q.discriminant));
  const Vector<Scalar> weights = t.b() + *eps * k.k();
  auto r = make_record(tn + dt, linear_combination(u, dt, weights, sd.f), dt);
  r.epsilon = *eps;
  return r;
}

/// Computes the stages and applies the update selected by `method`. `k` is
/// required for Method::relaxation_free.
template <typename Scalar>
StepRecord<Scalar> step(Method method, const ButcherTableau<Scalar>& t,
                        const KVector<Scalar>* k, const Rhs<Scalar>& rhs, Scalar tn,
                        const State<Scalar>& u, Scalar dt) {
  const auto sd = compute_stages(t, rhs, tn, u, dt);
  switch (method) {
    case Method::classical: return classical_step(t, sd, u, tn, dt);
    case Method::idt: return idt_step(t, sd, u, tn, dt);
    case Method::relaxation: return rrk_step(t, sd, u, tn, dt);
    case Method::relaxation_free:
      if (k == nullptr) throw std::invalid_argument("relaxation-free step needs a k-vector");
      return rfrk_step(t, *k, sd, u, tn, dt);
  }
  throw std::logic_error("unhandled method");
}

template <typename Scalar>
using StepObserver = std::function<void(const StepRecord<Scalar>&)>;

inline constexpr double kStepCountTol = 1e-9;

/// Number of fixed steps covering [t0, t_end]; throws std::invalid_argument
/// unless (t_end - t0)/dt is within 1e-9 of an integer.
template <typename Scalar>
std::size_t fixed_step_count(Scalar t0, Scalar dt, Scalar t_end) {
  using std::abs;
  using std::round;
  const Scalar n = (t_end - t0) / dt;
  const Scalar rounded = round(n);
  if (abs(n - rounded) > Scalar(kStepCountTol) || rounded < Scalar(1)) {
    throw std::invalid_argument("(t_end - t0)/dt = " + std::to_string(double(n)) +
                                " is not a positive integer");
  }
  return static_cast<std::size_t>(rounded);
}

/// Fixed-step integration from (t0, u0).
///
/// The returned trajectory starts with the initial state (step 0) and then
/// holds every `record_every`-th step plus always the last one. The
/// observer, when set, sees every step as it is produced, so callers keep
/// partial output when a step fails.
///
/// Non-relaxation modes take exactly round((t_end - t0)/dt) steps. The
/// relaxation mode keeps stepping until the accumulated time reaches t_end
/// and never shortens its final step.
///
/// Step failures are rethrown as IntegrationError carrying the 1-based
/// index of the failing step and its start time.
template <typename Scalar>
std::vector<StepRecord<Scalar>> integrate(const Rhs<Scalar>& rhs, Method method,
                                          const ButcherTableau<Scalar>& t,
                                          const std::optional<KVector<Scalar>>& k,
                                          const State<Scalar>& u0, Scalar t0, Scalar dt,
                                          Scalar t_end, std::size_t record_every = 1,
                                          const StepObserver<Scalar>& observer = {}) {
  using std::abs;
  using std::ceil;
  if (!(dt > Scalar(0))) throw std::invalid_argument("dt must be positive");
  if (!(t_end > t0)) throw std::invalid_argument("t_end must exceed t0");
  if (method == Method::relaxation_free && !k) {
    throw std::invalid_argument("relaxation-free integration needs a k-vector");
  }
  if (record_every == 0) record_every = 1;
  const KVector<Scalar>* kp = k ? &*k : nullptr;

  std::vector<StepRecord<Scalar>> out;
  auto emit = [&](const StepRecord<Scalar>& r, bool keep) {
    if (observer) observer(r);
    if (keep) out.push_back(r);
  };

  StepRecord<Scalar> current;
  current.t = t0;
  current.state = u0;
  current.energy = energy(u0);
  emit(current, true);

  auto advance = [&](std::size_t index, Scalar tn) {
    try {
      auto next = step(method, t, kp, rhs, tn, current.state, dt);
      next.step = index;
      return next;
    } catch (const NoRealRootError& e) {
      throw IntegrationError(index, double(tn), IntegrationError::Cause::no_real_root,
                             e.what());
    } catch (const StalledRelaxationError& e) {
      throw IntegrationError(index, double(tn),
                             IntegrationError::Cause::stalled_relaxation, e.what());
    } catch (const NonFiniteError& e) {
      throw IntegrationError(index, double(tn), IntegrationError::Cause::non_finite,
                             e.what());
    }
  };

  if (method == Method::relaxation) {
    // Slack absorbs roundoff in the accumulated time, e.g. ten steps of 0.1
    // summing to 0.9999999999999999.
    const Scalar slack = Scalar(1e-12) * std::max(Scalar(1), abs(t_end));
    const auto max_steps =
        static_cast<std::size_t>(1000 * ceil((t_end - t0) / dt)) + 1000;
    std::size_t index = 0;
    while (t_end - current.t > slack) {
      if (++index > max_steps) {
        throw IntegrationError(index, double(current.t),
                               IntegrationError::Cause::stalled_relaxation,
                               "relaxed steps make no progress towards t_end");
      }
      current = advance(index, current.t);
      emit(current, index % record_every == 0 || t_end - current.t <= slack);
    }
    return out;
  }

  const auto n = fixed_step_count(t0, dt, t_end);
  for (std::size_t i = 1; i <= n; ++i) {
    const Scalar tn = t0 + Scalar(i - 1) * dt;
    current = advance(i, tn);
    current.t = t0 + Scalar(i) * dt;
    emit(current, i % record_every == 0 || i == n);
  }
  return out;
}

/// Least-squares slope of log(y) against log(x).
template <typename Scalar>
Scalar log_log_slope(const std::vector<Scalar>& x, const std::vector<Scalar>& y) {
  using std::log;
  if (x.size() != y.size()) throw LengthMismatchError(x.size(), y.size());
  if (x.size() < 2) throw ConvergenceError("slope fit needs at least two points");
  Scalar mx(0), my(0);
  const auto n = static_cast<Scalar>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += log(x[i]);
    my += log(y[i]);
  }
  mx /= n;
  my /= n;
  Scalar sxy(0), sxx(0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Scalar dx = log(x[i]) - mx;
    sxy += dx * (log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == Scalar(0)) throw ConvergenceError("slope fit needs distinct step sizes");
  return sxy / sxx;
}

inline constexpr double kRoundoffFloor = 1e-12;

template <typename Scalar>
struct ConvergencePoint {
  Scalar dt;
  Scalar final_time;
  Scalar error;
  bool used_in_fit;
  std::optional<std::string> failure;
};

template <typename Scalar>
struct ConvergenceResult {
  std::vector<ConvergencePoint<Scalar>> points;
  Scalar slope;
};

/// Runs `method` once per dt and measures the L2 error against `exact` at
/// the time each run actually ends. Failed runs are kept with `failure` set.
template <typename Scalar>
std::vector<ConvergencePoint<Scalar>> measure_convergence(
    const Rhs<Scalar>& rhs, const std::function<State<Scalar>(Scalar)>& exact,
    Method method, const ButcherTableau<Scalar>& t, const std::optional<KVector<Scalar>>& k,
    const State<Scalar>& u0, Scalar t0, Scalar t_end, const std::vector<Scalar>& dts) {
  std::vector<ConvergencePoint<Scalar>> points;
  for (const Scalar dt : dts) {
    ConvergencePoint<Scalar> point{dt, Scalar(0), Scalar(0), false, std::nullopt};
    try {
      const auto traj = integrate(rhs, method, t, k, u0, t0, dt, t_end,
                                  std::numeric_limits<std::size_t>::max());
      const auto& last = traj.back();
      point.final_time = last.t;
      point.error = (last.state - exact(last.t)).norm();
      point.used_in_fit = point.error > Scalar(kRoundoffFloor);
    } catch (const IntegrationError& e) {
      point.failure = e.what();
    }
    points.push_back(point);
  }
  return points;
}

/// Slope over the points flagged `used_in_fit`. Throws ConvergenceError
/// with fewer than two of them.
template <typename Scalar>
Scalar fit_convergence(const std::vector<ConvergencePoint<Scalar>>& points) {
  std::vector<Scalar> xs, ys;
  for (const auto& p : points) {
    if (!p.used_in_fit) continue;
    xs.push_back(p.dt);
    ys.push_back(p.error);
  }
  if (xs.size() < 2) {
    throw ConvergenceError("fewer than two usable points above the roundoff floor");
  }
  return log_log_slope(xs, ys);
}

/// measure_convergence followed by fit_convergence; errors below 1e-12
/// are excluded from the fit.
template <typename Scalar>
ConvergenceResult<Scalar> convergence_study(
    const Rhs<Scalar>& rhs, const std::function<State<Scalar>(Scalar)>& exact,
    Method method, const ButcherTableau<Scalar>& t, const std::optional<KVector<Scalar>>& k,
    const State<Scalar>& u0, Scalar t0, Scalar t_end, const std::vector<Scalar>& dts) {
  ConvergenceResult<Scalar> result{};
  result.points = measure_convergence(rhs, exact, method, t, k, u0, t0, t_end, dts);
  result.slope = fit_convergence(result.points);
  return result;
}

}  // namespace rfrk
