#pragma once

#include <cmath>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rfrk/error.hpp"
#include "rfrk/types.hpp"

namespace rfrk {

/// Coefficients (A, b, c) of an explicit Runge-Kutta scheme together with
/// its declared order. Immutable once constructed; the constructor only
/// checks shapes, consistency is reported by validate_tableau().
template <typename Scalar>
class ButcherTableau {
 public:
  ButcherTableau(std::string name, int order, Matrix<Scalar> a, Vector<Scalar> b,
                 Vector<Scalar> c)
      : name_(std::move(name)),
        order_(order),
        a_(std::move(a)),
        b_(std::move(b)),
        c_(std::move(c)) {
    const auto s = b_.size();
    if (s < 1 || a_.rows() != s || a_.cols() != s || c_.size() != s) {
      throw std::invalid_argument("tableau '" + name_ +
                                  "': inconsistent coefficient shapes");
    }
    if (order_ < 1) {
      throw std::invalid_argument("tableau '" + name_ + "': order must be positive");
    }
  }

  const std::string& name() const { return name_; }
  int stages() const { return static_cast<int>(b_.size()); }
  int order() const { return order_; }
  const Matrix<Scalar>& a() const { return a_; }
  const Vector<Scalar>& b() const { return b_; }
  const Vector<Scalar>& c() const { return c_; }

  template <typename Other>
  ButcherTableau<Other> cast() const {
    return ButcherTableau<Other>(name_, order_, a_.template cast<Other>(),
                                 b_.template cast<Other>(), c_.template cast<Other>());
  }

 private:
  std::string name_;
  int order_;
  Matrix<Scalar> a_;
  Vector<Scalar> b_;
  Vector<Scalar> c_;
};

template <typename Scalar>
struct ValidationCheck {
  std::string name;
  bool passed;
  Scalar residual;
};

template <typename Scalar>
struct ValidationReport {
  std::vector<ValidationCheck<Scalar>> checks;

  bool ok() const {
    for (const auto& check : checks) {
      if (!check.passed) return false;
    }
    return true;
  }

  const ValidationCheck<Scalar>* find(const std::string& name) const {
    for (const auto& check : checks) {
      if (check.name == name) return &check;
    }
    return nullptr;
  }
};

inline constexpr double kExactIdentityTol = 1e-14;

/// Checks explicitness, row-sum and consistency invariants. Never throws;
/// each check carries its measured residual.
template <typename Scalar>
ValidationReport<Scalar> validate_tableau(const ButcherTableau<Scalar>& t) {
  using std::abs;
  const auto s = t.stages();
  ValidationReport<Scalar> report;

  Scalar upper(0);
  for (int i = 0; i < s; ++i) {
    for (int j = i; j < s; ++j) upper = std::max(upper, Scalar(abs(t.a()(i, j))));
  }
  report.checks.push_back({"explicit", upper == Scalar(0), upper});

  const Scalar row_sum = (t.a().rowwise().sum() - t.c()).cwiseAbs().maxCoeff();
  report.checks.push_back({"row_sum", row_sum <= Scalar(kExactIdentityTol), row_sum});

  const Scalar consistency = abs(t.b().sum() - Scalar(1));
  report.checks.push_back(
      {"consistency", consistency <= Scalar(kExactIdentityTol), consistency});
  return report;
}

template <typename Scalar>
struct OrderCondition {
  int order;
  std::string tree;
  Scalar residual;
};

/// Residuals of the rooted-tree order conditions through `up_to` (<= 5),
/// written in vector form with c and A. Trees are labelled by the product
/// they evaluate, e.g. "b.c^2" or "b.A(c*Ac)".
template <typename Scalar>
std::vector<OrderCondition<Scalar>> check_order_conditions(const ButcherTableau<Scalar>& t,
                                                           int up_to) {
  if (up_to < 1 || up_to > 5) {
    throw std::invalid_argument("order conditions are tabulated for orders 1..5");
  }
  const auto& a = t.a();
  const auto& b = t.b();
  const Vector<Scalar> c = t.c();
  const Vector<Scalar> c2 = c.cwiseProduct(c);
  const Vector<Scalar> c3 = c2.cwiseProduct(c);
  const Vector<Scalar> ac = a * c;
  const Vector<Scalar> ac2 = a * c2;
  const Vector<Scalar> a2c = a * ac;

  std::vector<OrderCondition<Scalar>> out;
  auto add = [&](int order, std::string tree, Scalar value, Scalar expected) {
    if (order <= up_to) out.push_back({order, std::move(tree), value - expected});
  };
  const auto one = Scalar(1);

  add(1, "b.e", b.sum(), one);
  add(2, "b.c", b.dot(c), one / 2);
  add(3, "b.c^2", b.dot(c2), one / 3);
  add(3, "b.Ac", b.dot(ac), one / 6);
  add(4, "b.c^3", b.dot(c3), one / 4);
  add(4, "b.(c*Ac)", b.dot(c.cwiseProduct(ac)), one / 8);
  add(4, "b.Ac^2", b.dot(ac2), one / 12);
  add(4, "b.A^2c", b.dot(a2c), one / 24);
  add(5, "b.c^4", b.dot(c3.cwiseProduct(c)), one / 5);
  add(5, "b.(c^2*Ac)", b.dot(c2.cwiseProduct(ac)), one / 10);
  add(5, "b.(c*Ac^2)", b.dot(c.cwiseProduct(ac2)), one / 15);
  add(5, "b.(c*A^2c)", b.dot(c.cwiseProduct(a2c)), one / 30);
  add(5, "b.(Ac*Ac)", b.dot(ac.cwiseProduct(ac)), one / 20);
  add(5, "b.Ac^3", b.dot(a * c3), one / 20);
  add(5, "b.A(c*Ac)", b.dot(a * c.cwiseProduct(ac)), one / 40);
  add(5, "b.A^2c^2", b.dot(a * ac2), one / 60);
  add(5, "b.A^3c", b.dot(a * a2c), one / 120);
  return out;
}

/// True when every condition of order <= `order` has |residual| <= tol.
template <typename Scalar>
bool satisfies_order(const std::vector<OrderCondition<Scalar>>& conditions, int order,
                     Scalar tol = Scalar(1e-13)) {
  using std::abs;
  for (const auto& cond : conditions) {
    if (cond.order <= order && abs(cond.residual) > tol) return false;
  }
  return true;
}

/// Perturbation direction for the relaxation-free update b + eps*k.
template <typename Scalar>
class KVector {
 public:
  const Vector<Scalar>& k() const { return k_; }
  Scalar kc_sum() const { return kc_sum_; }

 private:
  template <typename S>
  friend KVector<S> validate_k(const ButcherTableau<S>&, const Vector<S>&);

  KVector(Vector<Scalar> k, Scalar kc_sum) : k_(std::move(k)), kc_sum_(kc_sum) {}

  Vector<Scalar> k_;
  Scalar kc_sum_;
};

inline constexpr double kDegenerateKcTol = 1e-12;

/// Accepts k when sum(k) vanishes and sum(k*c) does not. Both thresholds
/// scale with ||k||_1 so the test is invariant under k -> alpha*k.
template <typename Scalar>
KVector<Scalar> validate_k(const ButcherTableau<Scalar>& t, const Vector<Scalar>& k) {
  using std::abs;
  if (k.size() != t.stages()) {
    throw KVectorError(KVectorError::Kind::wrong_length,
                       "k has length " + std::to_string(k.size()) + ", tableau '" +
                           t.name() + "' has " + std::to_string(t.stages()) + " stages");
  }
  const Scalar scale = k.cwiseAbs().sum();
  const Scalar sum = k.sum();
  if (!(abs(sum) <= Scalar(kExactIdentityTol) * scale)) {
    throw KVectorError(KVectorError::Kind::sum_nonzero, "sum of k must vanish");
  }
  const Scalar kc = k.dot(t.c());
  if (!(abs(kc) > Scalar(kDegenerateKcTol) * scale)) {
    throw KVectorError(KVectorError::Kind::degenerate, "sum of k_i c_i must be nonzero");
  }
  return KVector<Scalar>(k, kc);
}

// Registry of the built-in schemes (data/tableaus.txt, embedded at build time).

std::vector<std::string> builtin_scheme_names();

/// Throws UnknownSchemeError for unregistered names.
ButcherTableau<double> builtin_tableau(const std::string& name);

/// The perturbation direction used with each built-in scheme.
Vector<double> default_k(const std::string& name);

/// Reads every record of a tableau data file. Throws std::runtime_error on
/// malformed input.
std::vector<ButcherTableau<double>> parse_tableaus(std::istream& in);

/// Writes one record in the data-file layout with 17 significant digits.
void write_tableau(std::ostream& out, const ButcherTableau<double>& t);

}  // namespace rfrk
