#pragma once

#include <Eigen/Dense>

namespace rfrk {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// A point of the ODE phase space. Stage collections are stored as the
/// columns of a Matrix.
template <typename Scalar>
using State = Vector<Scalar>;

}  // namespace rfrk
