#pragma once

// Central finite-difference gradient checks for every differentiable op,
// shared by the unit tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flusense/common/rng.hpp"
#include "flusense/tensor/ops.hpp"

namespace flusense::testing {

using tensor::Shape;
using tensor::Tensor64;

struct GradCase {
  std::string name;
  std::function<std::vector<Tensor64>(Rng&)> make_inputs;
  std::function<Tensor64(std::vector<Tensor64>&)> loss;
};

inline Tensor64 RandomTensor(Rng& rng, Shape shape, double scale = 1.0) {
  std::vector<double> values(tensor::NumElements(shape));
  for (auto& v : values) v = rng.Normal(0.0, scale);
  return Tensor64::FromData(std::move(shape), std::move(values));
}

// Contracts an op output with fixed pseudo-random weights so every output
// element contributes a distinct amount to the scalar.
inline Tensor64 Probe(const Tensor64& out) {
  std::vector<double> weights(out.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = std::sin(1.0 + 0.37 * static_cast<double>(i));
  return tensor::Sum(tensor::Mul(out, Tensor64::FromData(out.shape(), std::move(weights))));
}

// Largest |analytic - central difference| / max(1, |central difference|) over
// every input element.
inline double MaxGradientError(const GradCase& c, std::vector<Tensor64> inputs, double step = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.ClearGrad();
  }
  {
    tensor::Tape64 tape;
    tensor::TapeScope64 scope(tape);
    auto loss = c.loss(inputs);
    tape.Backward(loss);
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.data();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double saved = values[j];
      values[j] = saved + step;
      const double up = c.loss(inputs).item();
      values[j] = saved - step;
      const double down = c.loss(inputs).item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.empty() ? 0.0 : analytic[j];
      worst = std::max(worst, std::abs(a - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

inline std::vector<GradCase> AllGradCases() {
  using namespace tensor;
  std::vector<GradCase> cases;
  cases.push_back({"add", [](Rng& r) { return std::vector{RandomTensor(r, {3, 4}), RandomTensor(r, {3, 4})}; },
                   [](auto& in) { return Probe(Add(in[0], in[1])); }});
  cases.push_back({"mul", [](Rng& r) { return std::vector{RandomTensor(r, {3, 4}), RandomTensor(r, {3, 4})}; },
                   [](auto& in) { return Probe(Mul(in[0], in[1])); }});
  cases.push_back({"scale", [](Rng& r) { return std::vector{RandomTensor(r, {5})}; },
                   [](auto& in) { return Probe(Scale(in[0], -1.7)); }});
  cases.push_back({"relu", [](Rng& r) { return std::vector{RandomTensor(r, {4, 5})}; },
                   [](auto& in) { return Probe(Relu(in[0])); }});
  cases.push_back({"add_broadcast",
                   [](Rng& r) { return std::vector{RandomTensor(r, {2, 3, 4}), RandomTensor(r, {3, 4})}; },
                   [](auto& in) { return Probe(AddBroadcast(in[0], in[1])); }});
  cases.push_back({"sum", [](Rng& r) { return std::vector{RandomTensor(r, {2, 3})}; },
                   [](auto& in) { return Sum(Mul(in[0], in[0])); }});
  cases.push_back({"mean_axis1", [](Rng& r) { return std::vector{RandomTensor(r, {2, 5, 3})}; },
                   [](auto& in) { return Probe(Mean(in[0], 1)); }});
  cases.push_back({"reshape", [](Rng& r) { return std::vector{RandomTensor(r, {2, 6})}; },
                   [](auto& in) { return Probe(Reshape(in[0], {3, 4})); }});
  cases.push_back({"transpose", [](Rng& r) { return std::vector{RandomTensor(r, {2, 3, 4})}; },
                   [](auto& in) { return Probe(TransposeLast2(in[0])); }});
  cases.push_back({"concat", [](Rng& r) { return std::vector{RandomTensor(r, {2, 3}), RandomTensor(r, {2, 2})}; },
                   [](auto& in) { return Probe(Concat(in[0], in[1])); }});
  cases.push_back({"dropout", [](Rng& r) { return std::vector{RandomTensor(r, {4, 6})}; },
                   [](auto& in) {
                     Rng mask_rng(99);
                     return Probe(Dropout(in[0], 0.4, true, mask_rng));
                   }});
  cases.push_back({"matmul", [](Rng& r) { return std::vector{RandomTensor(r, {3, 5}), RandomTensor(r, {5, 2})}; },
                   [](auto& in) { return Probe(MatMul(in[0], in[1])); }});
  cases.push_back({"linear",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {2, 3, 4}), RandomTensor(r, {4, 5}), RandomTensor(r, {5})};
                   },
                   [](auto& in) { return Probe(Linear(in[0], in[1], in[2])); }});
  cases.push_back({"conv1d",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {2, 3, 17}), RandomTensor(r, {4, 3, 5}), RandomTensor(r, {4})};
                   },
                   [](auto& in) { return Probe(Conv1d(in[0], in[1], in[2], 3)); }});
  cases.push_back({"deconv1d",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {2, 3, 6}), RandomTensor(r, {3, 2, 5}), RandomTensor(r, {2})};
                   },
                   [](auto& in) { return Probe(Deconv1d(in[0], in[1], in[2], 3, 1)); }});
  cases.push_back({"batchnorm1d_train",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {3, 2, 5}), RandomTensor(r, {2}), RandomTensor(r, {2})};
                   },
                   [](auto& in) {
                     auto state = BatchNormState<double>::Create(2);
                     return Probe(BatchNorm1d(in[0], in[1], in[2], state, true));
                   }});
  cases.push_back({"batchnorm1d_eval",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {2, 2, 5}), RandomTensor(r, {2}), RandomTensor(r, {2})};
                   },
                   [](auto& in) {
                     auto state = BatchNormState<double>::Create(2);
                     state.running_mean.data()[0] = 0.3;
                     state.running_var.data()[1] = 2.5;
                     return Probe(BatchNorm1d(in[0], in[1], in[2], state, false));
                   }});
  cases.push_back({"layernorm",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {3, 6}), RandomTensor(r, {6}), RandomTensor(r, {6})};
                   },
                   [](auto& in) { return Probe(LayerNorm(in[0], in[1], in[2])); }});
  cases.push_back({"softmax_last", [](Rng& r) { return std::vector{RandomTensor(r, {3, 5})}; },
                   [](auto& in) { return Probe(Softmax(in[0], 1)); }});
  cases.push_back({"softmax_axis0", [](Rng& r) { return std::vector{RandomTensor(r, {4, 3})}; },
                   [](auto& in) { return Probe(Softmax(in[0], 0)); }});
  cases.push_back({"attention",
                   [](Rng& r) {
                     return std::vector{RandomTensor(r, {2, 5, 4}), RandomTensor(r, {2, 5, 4}), RandomTensor(r, {2, 5, 4})};
                   },
                   [](auto& in) { return Probe(ScaledDotProductAttention(in[0], in[1], in[2], 2)); }});
  cases.push_back({"multi_head_attention",
                   [](Rng& r) {
                     std::vector<Tensor64> in{RandomTensor(r, {5, 4})};
                     for (int i = 0; i < 4; ++i) {
                       in.push_back(RandomTensor(r, {4, 4}, 0.5));
                       in.push_back(RandomTensor(r, {4}, 0.5));
                     }
                     return in;
                   },
                   [](auto& in) {
                     AttentionWeights<double> w{in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8]};
                     return Probe(MultiHeadAttention(in[0], w, 2));
                   }});
  cases.push_back({"cross_entropy", [](Rng& r) { return std::vector{RandomTensor(r, {4, 3})}; },
                   [](auto& in) {
                     const std::vector<int> labels{0, 2, 1, 2};
                     return CrossEntropyLoss<double>(in[0], labels);
                   }});
  cases.push_back({"cross_entropy_weighted", [](Rng& r) { return std::vector{RandomTensor(r, {4, 2})}; },
                   [](auto& in) {
                     const std::vector<int> labels{0, 1, 1, 0};
                     const std::vector<double> weights{1.0, 3.5};
                     return CrossEntropyLoss<double>(in[0], labels, weights);
                   }});
  cases.push_back({"mse_masked",
                   [](Rng& r) { return std::vector{RandomTensor(r, {3, 4})}; },
                   [](auto& in) {
                     std::vector<double> target(12), mask(12);
                     for (int i = 0; i < 12; ++i) {
                       target[i] = 0.1 * i;
                       mask[i] = (i % 3 == 0) ? 0.0 : 1.0;
                     }
                     const auto t = Tensor64::FromData({3, 4}, target);
                     const auto m = Tensor64::FromData({3, 4}, mask);
                     return MseLoss(in[0], t, &m);
                   }});
  return cases;
}

}  // namespace flusense::testing
