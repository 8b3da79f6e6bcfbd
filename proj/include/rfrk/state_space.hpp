#pragma once

#include <Eigen/Dense>

#include "rfrk/error.hpp"
#include "rfrk/types.hpp"

namespace rfrk {

/// Unweighted L2 inner product, summed sequentially in index order so that
/// inner(u, v) == inner(v, u) bit for bit.
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar inner(const Eigen::MatrixBase<DerivedU>& u,
                                const Eigen::MatrixBase<DerivedV>& v) {
  if (u.size() != v.size()) {
    throw LengthMismatchError(static_cast<std::size_t>(u.size()),
                              static_cast<std::size_t>(v.size()));
  }
  typename DerivedU::Scalar sum(0);
  for (Eigen::Index i = 0; i < u.size(); ++i) sum += u(i) * v(i);
  return sum;
}

template <typename Derived>
typename Derived::Scalar energy(const Eigen::MatrixBase<Derived>& u) {
  return inner(u, u);
}

/// base + dt * sum_j coeffs_j * stages.col(j)
template <typename DerivedBase, typename DerivedCoeffs, typename DerivedStages>
State<typename DerivedBase::Scalar> linear_combination(
    const Eigen::MatrixBase<DerivedBase>& base, typename DerivedBase::Scalar dt,
    const Eigen::MatrixBase<DerivedCoeffs>& coeffs,
    const Eigen::MatrixBase<DerivedStages>& stages) {
  if (stages.rows() != base.size()) {
    throw LengthMismatchError(static_cast<std::size_t>(stages.rows()),
                              static_cast<std::size_t>(base.size()));
  }
  if (stages.cols() != coeffs.size()) {
    throw LengthMismatchError(static_cast<std::size_t>(stages.cols()),
                              static_cast<std::size_t>(coeffs.size()));
  }
  State<typename DerivedBase::Scalar> out = base;
  for (Eigen::Index j = 0; j < stages.cols(); ++j) {
    const auto w = dt * coeffs(j);
    if (w != 0) out += w * stages.col(j);
  }
  return out;
}

/// G_ij = <f_i, f_j> over the columns of `stages`; each unordered pair is
/// evaluated once, so G is exactly symmetric.
template <typename Derived>
Matrix<typename Derived::Scalar> gram(const Eigen::MatrixBase<Derived>& stages) {
  const auto s = stages.cols();
  Matrix<typename Derived::Scalar> g(s, s);
  for (Eigen::Index i = 0; i < s; ++i) {
    for (Eigen::Index j = i; j < s; ++j) {
      g(i, j) = inner(stages.col(i), stages.col(j));
      g(j, i) = g(i, j);
    }
  }
  return g;
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& x) {
  return x.allFinite();
}

}  // namespace rfrk
