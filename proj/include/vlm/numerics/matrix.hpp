#pragma once

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace vlm {

// Rows index tokens throughout, so matrices are stored row-major.
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

template <typename Scalar>
using ColVec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXr = Mat<double>;
using RowVectorXr = RowVec<double>;
using VectorXr = ColVec<double>;

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Named parameter tensors. Ordered so that iteration (checkpoints, optimizer
// updates, gradient norms) is deterministic.
template <typename Scalar>
using TensorMap = std::map<std::string, Mat<Scalar>, std::less<>>;

template <typename Scalar>
using GradientMap = TensorMap<Scalar>;

template <typename To, typename From>
TensorMap<To> cast_tensors(const TensorMap<From>& in) {
  TensorMap<To> out;
  for (const auto& [name, value] : in) out.emplace(name, value.template cast<To>());
  return out;
}

template <typename Scalar>
std::vector<long> shape_of(const Mat<Scalar>& m) {
  return {static_cast<long>(m.rows()), static_cast<long>(m.cols())};
}

}  // namespace vlm
