#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "../support/grad_cases.hpp"
#include "flusense/common/errors.hpp"
#include "flusense/tensor/adam.hpp"
#include "flusense/tensor/checkpoint.hpp"
#include "flusense/tensor/ops.hpp"

using namespace flusense;
using namespace flusense::tensor;

TEST_CASE("conv1d length formula on the default encoder stack") {
  CHECK(Conv1dOutputLength(10080, 5, 5) == 2016);
  CHECK(Conv1dOutputLength(2016, 5, 3) == 671);
  CHECK(Conv1dOutputLength(671, 2, 2) == 335);
  CHECK(Deconv1dOutputLength(2016, 5, 5) == 10080);
  CHECK_THROWS_AS(Conv1dOutputLength(4, 5, 1), DimensionError);
}

TEST_CASE("conv1d/deconv1d length formulas hold for random geometries") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto kernel = static_cast<std::size_t>(rng.UniformInt(1, 6));
    const auto stride = static_cast<std::size_t>(rng.UniformInt(1, 5));
    const auto length = static_cast<std::size_t>(rng.UniformInt(static_cast<std::int64_t>(kernel), 40));
    const auto x = Tensor::Full({1, 2, length}, 1.0f);
    const auto w = Tensor::Full({3, 2, kernel}, 0.5f);
    const auto b = Tensor::Zeros({3});
    const auto y = Conv1d(x, w, b, stride);
    REQUIRE(y.dim(2) == (length - kernel) / stride + 1);
    const auto dw = Tensor::Full({3, 2, kernel}, 0.5f);
    const auto z = Deconv1d(y, dw, Tensor::Zeros({2}), stride);
    CHECK(z.dim(2) == (y.dim(2) - 1) * stride + kernel);
    // Output padding restores the exact encoder input length.
    const std::size_t pad = length - z.dim(2);
    if (pad < stride) CHECK(Deconv1d(y, dw, Tensor::Zeros({2}), stride, pad).dim(2) == length);
  }
}

TEST_CASE("conv1d identity kernel and channel mismatch") {
  const auto x = Tensor::FromData({1, 3}, {1, 2, 3});
  const auto y = Conv1d(x, Tensor::FromData({1, 1, 1}, {1}), Tensor::Zeros({1}), 1);
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{1, 2, 3});
  CHECK_THROWS_AS(Conv1d(x, Tensor::Zeros({1, 2, 1}), Tensor::Zeros({1}), 1), DimensionError);
}

TEST_CASE("deconv1d spreads a single element") {
  const auto y = Deconv1d(Tensor::FromData({1, 1}, {1}), Tensor::FromData({1, 1, 2}, {1, 1}), Tensor::Zeros({1}), 2);
  CHECK(y.shape() == Shape{1, 2});
  CHECK(y[0] == 1.0f);
  CHECK(y[1] == 1.0f);
}

TEST_CASE("matmul contracts") {
  const auto eye = Tensor::FromData({2, 2}, {1, 0, 0, 1});
  const auto m = Tensor::FromData({2, 2}, {1, 2, 3, 4});
  const auto p = MatMul(eye, m);
  CHECK(std::vector<float>(p.data().begin(), p.data().end()) == std::vector<float>{1, 2, 3, 4});
  const auto sel = MatMul(Tensor::FromData({1, 2}, {1, 0}), Tensor::FromData({2, 1}, {7, 9}));
  CHECK(sel.item() == 7.0f);
  CHECK(MatMul(Tensor::Zeros({3, 5}), Tensor::Zeros({5, 2})).shape() == Shape{3, 2});
  CHECK_THROWS_AS(MatMul(Tensor::Zeros({3, 5}), Tensor::Zeros({4, 2})), DimensionError);
}

TEST_CASE("elementwise and normalization examples") {
  const auto r = Relu(Tensor::FromData({3}, {-1, 0, 2}));
  CHECK(std::vector<float>(r.data().begin(), r.data().end()) == std::vector<float>{0, 0, 2});
  const auto s = Softmax(Tensor::FromData({2}, {0, 0}), 0);
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  const auto ln = LayerNorm(Tensor::FromData({1, 3}, {4, 4, 4}), Tensor::Full({3}, 1.0f), Tensor::Zeros({3}));
  for (const float v : ln.data()) CHECK(v == 0.0f);
}

TEST_CASE("softmax rows are positive and sum to one") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = testing::RandomTensor(rng, {4, 7}, 5.0);
    const auto y = Softmax(x, 1);
    for (std::size_t row = 0; row < 4; ++row) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = y.data()[row * 7 + c];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layernorm output has zero mean and unit variance per row") {
  Rng rng(5);
  const auto x = testing::RandomTensor(rng, {6, 16}, 3.0);
  const auto y = LayerNorm(x, Tensor64::Full({16}, 1.0), Tensor64::Zeros({16}));
  for (std::size_t row = 0; row < 6; ++row) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t c = 0; c < 16; ++c) mean += y.data()[row * 16 + c];
    mean /= 16;
    for (std::size_t c = 0; c < 16; ++c) sq += std::pow(y.data()[row * 16 + c] - mean, 2);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(sq / 16 == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("dropout is the identity in eval mode and rescales kept entries") {
  Rng rng(3);
  const auto x = Tensor::Full({1000}, 2.0f);
  const auto eval = Dropout(x, 0.4, false, rng);
  for (const float v : eval.data()) CHECK(v == 2.0f);
  const auto train = Dropout(x, 0.4, true, rng);
  int kept = 0;
  for (const float v : train.data()) {
    if (v != 0.0f) {
      ++kept;
      CHECK(v == doctest::Approx(2.0 / 0.6));
    }
  }
  CHECK(kept > 500);
  CHECK(kept < 700);
}

TEST_CASE("batchnorm switches between batch and running statistics") {
  auto state = BatchNormState<float>::Create(1);
  const auto x = Tensor::FromData({2, 1, 2}, {1, 3, 5, 7});
  const auto gamma = Tensor::Full({1}, 1.0f);
  const auto beta = Tensor::Zeros({1});
  const auto y = BatchNorm1d(x, gamma, beta, state, true);
  double mean = 0.0;
  for (const float v : y.data()) mean += v;
  CHECK(std::abs(mean) < 1e-5);
  CHECK(state.running_mean[0] == doctest::Approx(0.4));  // 0.9*0 + 0.1*4
  const auto before = state.running_mean[0];
  const auto z = BatchNorm1d(x, gamma, beta, state, false);
  CHECK(state.running_mean[0] == before);
  CHECK(z[0] == doctest::Approx((1.0 - 0.4) / std::sqrt(state.running_var[0] + 1e-5)).epsilon(1e-5));
}

TEST_CASE("attention: uniform keys average values, single position returns value projection") {
  // Identical keys at every position: q = k = 0 projections, so the weights
  // are uniform and every output row is the mean of the value rows.
  const std::size_t L = 4, d = 4;
  AttentionWeights<double> w;
  w.query_weight = Tensor64::Zeros({d, d});
  w.query_bias = Tensor64::Zeros({d});
  w.key_weight = Tensor64::Zeros({d, d});
  w.key_bias = Tensor64::Zeros({d});
  std::vector<double> eye(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1.0;
  w.value_weight = Tensor64::FromData({d, d}, eye);
  w.value_bias = Tensor64::Zeros({d});
  w.output_weight = Tensor64::FromData({d, d}, eye);
  w.output_bias = Tensor64::Zeros({d});
  Rng rng(2);
  const auto x = testing::RandomTensor(rng, {L, d});
  const auto y = MultiHeadAttention(x, w, 2);
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < L; ++r) mean += x.data()[r * d + c];
    mean /= L;
    for (std::size_t r = 0; r < L; ++r) CHECK(y.data()[r * d + c] == doctest::Approx(mean));
  }

  Rng rng2(4);
  AttentionWeights<double> rw{testing::RandomTensor(rng2, {d, d}), testing::RandomTensor(rng2, {d}),
                              testing::RandomTensor(rng2, {d, d}), testing::RandomTensor(rng2, {d}),
                              testing::RandomTensor(rng2, {d, d}), testing::RandomTensor(rng2, {d}),
                              Tensor64::FromData({d, d}, eye), Tensor64::Zeros({d})};
  const auto single = testing::RandomTensor(rng2, {1, d});
  const auto out = MultiHeadAttention(single, rw, 4);
  const auto value = Linear(single, rw.value_weight, rw.value_bias);
  for (std::size_t c = 0; c < d; ++c) CHECK(out.data()[c] == doctest::Approx(value.data()[c]));

  const auto probs = AttentionProbabilities(testing::RandomTensor(rng2, {2, 6, d}), rw, 2);
  for (std::size_t row = 0; row < 2 * 2 * 6; ++row) {
    double total = 0.0;
    for (std::size_t c = 0; c < 6; ++c) total += probs.data()[row * 6 + c];
    CHECK(total == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(MultiHeadAttention(single, rw, 3), ConfigError);
}

TEST_CASE("cross entropy examples") {
  const std::vector<int> one{0};
  CHECK(CrossEntropyLoss<double>(Tensor64::FromData({1, 2}, {0.3, 0.3}), one).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-9));
  CHECK(CrossEntropyLoss<double>(Tensor64::FromData({1, 2}, {60.0, -60.0}), one).item() < 1e-12);
  const auto logits = Tensor64::FromData({2, 3}, {0.1, 2.0, -1.0, 0.5, 0.5, 3.0});
  const std::vector<int> labels{1, 0};
  const double l1 = CrossEntropyLoss<double>(Tensor64::FromData({1, 3}, {0.1, 2.0, -1.0}), std::vector<int>{1}).item();
  const double l2 = CrossEntropyLoss<double>(Tensor64::FromData({1, 3}, {0.5, 0.5, 3.0}), std::vector<int>{0}).item();
  CHECK(CrossEntropyLoss<double>(logits, labels).item() == doctest::Approx((l1 + l2) / 2));
  CHECK_THROWS_AS(CrossEntropyLoss<double>(logits, std::vector<int>{1, 3}), std::out_of_range);
  Rng rng(8);
  for (int k = 2; k < 6; ++k) {
    const auto x = testing::RandomTensor(rng, {5, static_cast<std::size_t>(k)});
    CHECK(CrossEntropyLoss<double>(x, std::vector<int>{0, 1, 0, 1, 0}).item() >= 0.0);
    CHECK(std::abs(CrossEntropyLoss<double>(Tensor64::Zeros({5, static_cast<std::size_t>(k)}),
                                            std::vector<int>{0, 1, 0, 1, 0})
                       .item() -
                   std::log(k)) < 1e-6);
  }
}

TEST_CASE("mse examples") {
  const auto target = Tensor::FromData({2}, {0, 0});
  CHECK(MseLoss(target, target).item() == 0.0f);
  const auto pred = Tensor::FromData({2}, {0, 2});
  CHECK(MseLoss(pred, target).item() == 2.0f);
  const auto mask = Tensor::FromData({2}, {1, 0});
  CHECK(MseLoss(pred, target, &mask).item() == 0.0f);
  const auto empty = Tensor::Zeros({2});
  CHECK_THROWS_AS(MseLoss(pred, target, &empty), DataError);
  CHECK_THROWS_AS(MseLoss(pred, Tensor::Zeros({3})), DimensionError);
}

TEST_CASE("backward basics: square and accumulation") {
  auto x = Tensor64::Scalar(3.0, true);
  {
    Tape64 tape;
    TapeScope64 scope(tape);
    tape.Backward(Mul(x, x));
  }
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  x.ClearGrad();
  {
    Tape64 tape;
    TapeScope64 scope(tape);
    tape.Backward(Add(x, x));
  }
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  Tape64 tape;
  TapeScope64 scope(tape);
  const auto y = Add(Tensor64::Zeros({2}, true), Tensor64::Zeros({2}));
  CHECK_THROWS_AS(tape.Backward(y), DimensionError);
}

TEST_CASE("tape records in topological order and stays empty without a scope") {
  auto a = Tensor64::Full({2}, 1.0, true);
  const auto untracked = Add(a, a);
  CHECK(untracked.node_id() == -1);
  Tape64 tape;
  TapeScope64 scope(tape);
  const auto b = Mul(a, a);
  const auto c = Sum(Add(b, a));
  for (const auto& entry : tape.entries()) {
    for (const auto id : entry.inputs) CHECK(id < entry.output);
  }
  CHECK(tape.size() == 3);
  CHECK(c.node_id() == 2);
}

TEST_CASE("every differentiable op passes central finite-difference checks") {
  for (const auto& c : testing::AllGradCases()) {
    for (std::uint64_t probe = 0; probe < 5; ++probe) {
      Rng rng = Rng(2024).Split(c.name).Split(probe);
      const double err = testing::MaxGradientError(c, c.make_inputs(rng));
      INFO(c.name << " probe " << probe << " error " << err);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("adam matches a hand-stepped recurrence") {
  auto p = Tensor64::FromData({2}, {1.0, -2.0}, true);
  std::vector<Tensor64> params{p};
  auto state = AdamState<double>::Create(params, AdamOptions{.learning_rate = 0.1});
  const std::vector<std::vector<double>> grads{{0.5, -3.0}, {0.5, -3.0}, {-1.0, 0.2}};
  // Reference recurrence written out independently.
  double ref[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  std::vector<double> deltas;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    for (int i = 0; i < 2; ++i) {
      const double g = grads[t - 1][i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t));
      const double vh = v[i] / (1 - std::pow(0.999, t));
      ref[i] -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
    }
    const double before = p.data()[0];
    auto grad = p.MutableGrad();
    grad[0] = grads[t - 1][0];
    grad[1] = grads[t - 1][1];
    AdamStep(params, state);
    deltas.push_back(std::abs(p.data()[0] - before));
    CHECK(p.data()[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(ref[1]).epsilon(1e-12));
  }
  CHECK(state.step == 3);
  CHECK(deltas[1] <= deltas[0] + 1e-6);
  // First step magnitude is lr * |g| / (|g| + eps') ~ lr.
  CHECK(deltas[0] == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("adam leaves parameters unchanged under zero gradients and checks lengths") {
  auto p = Tensor::FromData({3}, {1, 2, 3}, true);
  std::vector<Tensor> params{p};
  auto state = AdamState<float>::Create(params);
  p.MutableGrad();
  AdamStep(params, state);
  CHECK(std::vector<float>(p.data().begin(), p.data().end()) == std::vector<float>{1, 2, 3});
  std::vector<Tensor> other{Tensor::Zeros({4})};
  CHECK_THROWS_AS(AdamStep(other, state), DimensionError);
}

TEST_CASE("checkpoint round trip is bit-exact and little-endian") {
  const auto dir = std::filesystem::temp_directory_path() / "flusense_ckpt_test";
  std::filesystem::remove_all(dir);
  std::vector<NamedTensor> tensors{{"a", Tensor::FromData({2, 2}, {1.0f, -0.0f, 3.5e-8f, 1e30f})},
                                   {"b", Tensor::FromData({1}, {0.25f})}};
  SaveCheckpoint(dir / "model", tensors);
  const auto loaded = LoadCheckpoint(dir / "model");
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].name == "a");
  CHECK(loaded[0].tensor.shape() == Shape{2, 2});
  CHECK(Float32Bytes(loaded[0].tensor) == Float32Bytes(tensors[0].tensor));
  const auto bytes = Float32Bytes(tensors[1].tensor);
  CHECK(static_cast<unsigned char>(bytes[3]) == 0x3e);  // 0.25f = 0x3e800000
  std::vector<NamedTensor> wrong{{"a", Tensor::Zeros({4})}};
  CHECK_THROWS_AS(RestoreInto(loaded, wrong), DimensionError);
  std::filesystem::remove_all(dir);
}
