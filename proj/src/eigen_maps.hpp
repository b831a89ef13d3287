#pragma once

// Eigen views over Tensor storage. Internal to the library.

#include <Eigen/Core>

#include "h2lo/tensor.hpp"

namespace h2lo {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowMatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstRowMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

template <typename T>
RowMatMap<T> as_matrix(Tensor<T>& t) {
  return {t.data(), t.shape.at(0), static_cast<Eigen::Index>(t.size() / t.shape.at(0))};
}
template <typename T>
ConstRowMatMap<T> as_matrix(const Tensor<T>& t) {
  return {t.data(), t.shape.at(0), static_cast<Eigen::Index>(t.size() / t.shape.at(0))};
}
template <typename T>
Eigen::Map<const RowVec<T>> as_row(const Tensor<T>& t) {
  return {t.data(), static_cast<Eigen::Index>(t.size())};
}
template <typename T>
RowMatMap<T> grad_matrix(Tensor<T>& t) {
  return {t.grad.data(), t.shape.at(0), static_cast<Eigen::Index>(t.size() / t.shape.at(0))};
}

}  // namespace h2lo
