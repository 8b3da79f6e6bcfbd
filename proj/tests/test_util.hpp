#pragma once

#include <initializer_list>

#include "rfrk/types.hpp"

namespace rfrk::test {

template <typename Scalar = double>
Vector<Scalar> vec(std::initializer_list<Scalar> xs) {
  Vector<Scalar> v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (Scalar x : xs) v(i++) = x;
  return v;
}

inline double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace rfrk::test
