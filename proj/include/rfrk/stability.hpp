#pragma once

#include <cmath>
#include <complex>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "rfrk/error.hpp"
#include "rfrk/tableau.hpp"
#include "rfrk/types.hpp"

namespace rfrk {

/// R(z) = sum_j coeffs(j) z^j, the one-step amplification on u' = lambda u
/// with z = lambda dt.
template <typename Scalar>
struct StabilityPolynomial {
  Vector<Scalar> coeffs;

  int degree() const { return static_cast<int>(coeffs.size()) - 1; }
};

namespace detail {

// d_0 = 1, d_j = w^T A^(j-1) e for j = 1..s. A^s = 0 for explicit schemes,
// so this is the full Neumann expansion of 1 + z w^T (I - zA)^-1 e.
template <typename Scalar>
Vector<Scalar> resolvent_coeffs(const Matrix<Scalar>& a, const Vector<Scalar>& w) {
  const auto s = w.size();
  Vector<Scalar> d(s + 1);
  d(0) = Scalar(1);
  Vector<Scalar> v = Vector<Scalar>::Ones(s);
  for (Eigen::Index j = 1; j <= s; ++j) {
    d(j) = w.dot(v);
    v = a * v;
  }
  return d;
}

}  // namespace detail

template <typename Scalar>
StabilityPolynomial<Scalar> stability_polynomial(const ButcherTableau<Scalar>& t) {
  return {detail::resolvent_coeffs(t.a(), t.b())};
}

/// Polynomial of the scheme with weights b + eps*k.
template <typename Scalar>
StabilityPolynomial<Scalar> rf_polynomial(const ButcherTableau<Scalar>& t,
                                          const KVector<Scalar>& k, Scalar eps) {
  StabilityPolynomial<Scalar> p = stability_polynomial(t);
  Vector<Scalar> perturbation = detail::resolvent_coeffs(t.a(), k.k());
  perturbation(0) = Scalar(0);
  p.coeffs += eps * perturbation;
  return p;
}

template <typename Scalar>
std::complex<Scalar> eval_poly(const StabilityPolynomial<Scalar>& p, std::complex<Scalar> z) {
  std::complex<Scalar> acc(0);
  for (Eigen::Index j = p.coeffs.size() - 1; j >= 0; --j) acc = acc * z + p.coeffs(j);
  return acc;
}

inline constexpr double kStabilityBoundSlack = 1e-12;

/// Length of the stable segment [0, y*] of the imaginary axis containing
/// the origin, i.e. the first crossing of |R(iy)| = 1 (within 1e-12).
///
/// A coarse scan (step 0.01) brackets the first crossing, a fine grid
/// (step 1e-3) below it catches narrow excursions, and bisection refines
/// to `tol`. Throws NoStableIntervalError when the first coarse sample is
/// already unstable.
template <typename Scalar>
Scalar imaginary_axis_limit(const StabilityPolynomial<Scalar>& p, Scalar tol = Scalar(1e-12)) {
  using std::abs;
  const Scalar bound = Scalar(1) + Scalar(kStabilityBoundSlack);
  auto unstable = [&](Scalar y) {
    return abs(eval_poly(p, std::complex<Scalar>(Scalar(0), y))) > bound;
  };
  const Scalar coarse(0.01), fine(0.001), y_max(1000);

  Scalar hi(0);
  for (int i = 1; Scalar(i) * coarse <= y_max; ++i) {
    if (unstable(Scalar(i) * coarse)) {
      if (i == 1) {
        throw NoStableIntervalError("|R(iy)| > 1 immediately above y = 0");
      }
      hi = Scalar(i) * coarse;
      break;
    }
  }
  if (hi == Scalar(0)) throw NoStableIntervalError("no crossing of |R(iy)| = 1 found");

  Scalar lo = hi - coarse;
  for (int i = 1; Scalar(i) * fine < hi; ++i) {
    if (unstable(Scalar(i) * fine)) {
      hi = Scalar(i) * fine;
      lo = hi - fine;
      break;
    }
  }
  while (hi - lo > tol) {
    const Scalar mid = (lo + hi) / Scalar(2);
    (unstable(mid) ? hi : lo) = mid;
  }
  return lo;
}

/// |R| sampled on a rectangle. values(i, j) belongs to (re(j), im(i)).
template <typename Scalar>
struct RegionGrid {
  Vector<Scalar> re;
  Vector<Scalar> im;
  Matrix<Scalar> values;
};

template <typename Scalar>
RegionGrid<Scalar> region_scan(const StabilityPolynomial<Scalar>& p, Scalar re_min,
                               Scalar re_max, Scalar im_min, Scalar im_max, int n_re = 800,
                               int n_im = 800) {
  if (n_re < 2 || n_im < 2) throw std::invalid_argument("region scan needs >= 2 samples per axis");
  RegionGrid<Scalar> g;
  g.re = Vector<Scalar>::LinSpaced(n_re, re_min, re_max);
  g.im = Vector<Scalar>::LinSpaced(n_im, im_min, im_max);
  g.values.resize(n_im, n_re);
  for (int i = 0; i < n_im; ++i) {
    for (int j = 0; j < n_re; ++j) {
      g.values(i, j) = std::abs(eval_poly(p, std::complex<Scalar>(g.re(j), g.im(i))));
    }
  }
  return g;
}

/// CSV with header "re,im,absR", one sample per line, rows of constant im
/// in increasing order.
template <typename Scalar>
void write_region_csv(std::ostream& out, const RegionGrid<Scalar>& g) {
  out << "re,im,absR\n";
  char buf[96];
  for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < g.values.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", double(g.re(j)), double(g.im(i)),
                    double(g.values(i, j)));
      out << buf;
    }
  }
}

}  // namespace rfrk
