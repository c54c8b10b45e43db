#pragma once

#include <Eigen/Core>

#include "vfgs/tensor.hpp"

namespace vfgs::gemm {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Map = Eigen::Map<MatR<T>>;
template <typename T>
using CMap = Eigen::Map<const MatR<T>>;

template <typename T>
Map<T> view(T* p, Index rows, Index cols) {
  return Map<T>(p, rows, cols);
}
template <typename T>
CMap<T> view(const T* p, Index rows, Index cols) {
  return CMap<T>(p, rows, cols);
}

}  // namespace vfgs::gemm
