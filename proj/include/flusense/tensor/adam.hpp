#pragma once

#include <cstdint>
#include <vector>

#include "flusense/tensor/tensor.hpp"

namespace flusense::tensor {

struct AdamOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for an ordered parameter list; moments[i] pairs with the
// i-th parameter passed to AdamStep.
template <typename T>
struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  static AdamState Create(const std::vector<BasicTensor<T>>& params, AdamOptions options = {});
};

// Bias-corrected Adam update of every parameter from its accumulated
// gradient. Parameters without a gradient are treated as having a zero
// gradient. Increments state.step by one.
template <typename T>
void AdamStep(std::vector<BasicTensor<T>>& params, AdamState<T>& state);

template <typename T>
void ZeroGrad(std::vector<BasicTensor<T>>& params) {
  for (auto& p : params) p.ZeroGrad();
}

}  // namespace flusense::tensor
