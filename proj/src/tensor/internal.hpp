#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <vector>

#include "flusense/common/errors.hpp"
#include "flusense/tensor/tensor.hpp"

namespace flusense::tensor::detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

// Returns the active tape when the op must be recorded.
template <typename T>
BasicTape<T>* RecordingTape(std::initializer_list<const BasicTensor<T>*> inputs) {
  auto* tape = BasicTape<T>::Active();
  if (tape == nullptr) return nullptr;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return tape;
  }
  return nullptr;
}

template <typename T>
std::vector<std::int64_t> NodeIds(std::initializer_list<const BasicTensor<T>*> inputs) {
  std::vector<std::int64_t> ids;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined()) ids.push_back(t->node_id());
  }
  return ids;
}

// Gradient buffer of a tensor that participates in backward, or an empty span
// when the tensor needs no gradient.
template <typename T>
std::span<T> GradTarget(const BasicTensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return {};
  BasicTensor<T> handle = t;
  return handle.MutableGrad();
}

inline void Require(bool condition, const std::string& message) {
  if (!condition) throw DimensionError(message);
}

}  // namespace flusense::tensor::detail

#define FLUSENSE_INSTANTIATE_FLOAT_DOUBLE(MACRO) \
  MACRO(float)                                   \
  MACRO(double)
