#include "flusense/tensor/adam.hpp"

#include <cmath>

#include "flusense/common/errors.hpp"

namespace flusense::tensor {

template <typename T>
AdamState<T> AdamState<T>::Create(const std::vector<BasicTensor<T>>& params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.size(), T(0));
    state.second_moment.emplace_back(p.size(), T(0));
  }
  return state;
}

template <typename T>
void AdamStep(std::vector<BasicTensor<T>>& params, AdamState<T>& state) {
  if (params.size() != state.first_moment.size() || params.size() != state.second_moment.size()) {
    throw DimensionError("adam: parameter count does not match optimizer state");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != state.first_moment[i].size() || params[i].size() != state.second_moment[i].size()) {
      throw DimensionError("adam: parameter " + std::to_string(i) + " length does not match its moments");
    }
  }
  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) p.MutableGrad();
    auto values = p.data();
    const auto grad = p.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grad[j];
      const double mj = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      const double vj = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = o.learning_rate * (mj / correction1) / (std::sqrt(vj / correction2) + o.epsilon);
      values[j] = static_cast<T>(values[j] - update);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void AdamStep(std::vector<BasicTensor<float>>&, AdamState<float>&);
template void AdamStep(std::vector<BasicTensor<double>>&, AdamState<double>&);

}  // namespace flusense::tensor
