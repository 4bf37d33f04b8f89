#pragma once

#include <cstddef>
#include <optional>
#include <span>

#include "flusense/common/rng.hpp"
#include "flusense/tensor/tensor.hpp"

namespace flusense::tensor {

// ---------------------------------------------------------------------------
// Elementwise and shape ops.

template <typename T>
BasicTensor<T> Add(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> Mul(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> Scale(const BasicTensor<T>& a, T factor);
template <typename T>
BasicTensor<T> Relu(const BasicTensor<T>& a);
// Adds `b` to every trailing block of `a`; b.shape() must equal the trailing
// dimensions of a.shape() (e.g. a (B, L, d) plus b (L, d)).
template <typename T>
BasicTensor<T> AddBroadcast(const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> Sum(const BasicTensor<T>& a);
// Mean over one axis; the axis is removed from the result.
template <typename T>
BasicTensor<T> Mean(const BasicTensor<T>& a, std::size_t axis);
template <typename T>
BasicTensor<T> Reshape(const BasicTensor<T>& a, Shape shape);
// Swaps the last two axes.
template <typename T>
BasicTensor<T> TransposeLast2(const BasicTensor<T>& a);
// Concatenates along the last axis; leading dimensions must agree.
template <typename T>
BasicTensor<T> Concat(const BasicTensor<T>& a, const BasicTensor<T>& b);
// Inverted dropout: kept entries are scaled by 1/(1-p). Identity when not
// training or when p == 0.
template <typename T>
BasicTensor<T> Dropout(const BasicTensor<T>& a, double p, bool training, Rng& rng);

// ---------------------------------------------------------------------------
// Dense products.

template <typename T>
BasicTensor<T> MatMul(const BasicTensor<T>& a, const BasicTensor<T>& b);
// x (..., in) times weight (in, out) plus bias (out).
template <typename T>
BasicTensor<T> Linear(const BasicTensor<T>& x, const BasicTensor<T>& weight, const BasicTensor<T>& bias);

// ---------------------------------------------------------------------------
// Convolutions (valid, unpadded). Inputs are (C, L) or batched (B, C, L).

std::size_t Conv1dOutputLength(std::size_t length, std::size_t kernel, std::size_t stride);
std::size_t Deconv1dOutputLength(std::size_t length, std::size_t kernel, std::size_t stride,
                                 std::size_t output_padding = 0);

// weight (C_out, C_in, K), bias (C_out); out[j] = bias[j] + sum_k weight[j,k] * input[k]
// with * the strided cross-correlation.
template <typename T>
BasicTensor<T> Conv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias, std::size_t stride);
// Transposed convolution; weight (C_in, C_out, K), bias (C_out). Output
// padding appends trailing positions that receive only the bias, so a decoder
// can land exactly on the length its mirrored encoder layer consumed.
template <typename T>
BasicTensor<T> Deconv1d(const BasicTensor<T>& input, const BasicTensor<T>& weight,
                        const BasicTensor<T>& bias, std::size_t stride,
                        std::size_t output_padding = 0);

// ---------------------------------------------------------------------------
// Normalization.

template <typename T>
struct BatchNormState {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState Create(std::size_t channels);
};

// Per-channel normalization of (C, L) or (B, C, L). Training mode uses batch
// statistics and updates the running estimates; eval mode uses the running
// estimates and leaves the state untouched.
template <typename T>
BasicTensor<T> BatchNorm1d(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormState<T>& state, bool training);

inline constexpr double kLayerNormEpsilon = 1e-5;

// Normalizes over the last axis, then applies gamma/beta of that width.
template <typename T>
BasicTensor<T> LayerNorm(const BasicTensor<T>& input, const BasicTensor<T>& gamma,
                         const BasicTensor<T>& beta, double epsilon = kLayerNormEpsilon);
template <typename T>
BasicTensor<T> Softmax(const BasicTensor<T>& input, std::size_t axis);

// ---------------------------------------------------------------------------
// Attention.

template <typename T>
struct AttentionWeights {
  BasicTensor<T> query_weight, query_bias;
  BasicTensor<T> key_weight, key_bias;
  BasicTensor<T> value_weight, value_bias;
  BasicTensor<T> output_weight, output_bias;
};

// softmax(Q_h K_h^T / sqrt(d/heads)) V_h for every head h, heads concatenated.
// q, k, v are (L, d) or (B, L, d).
template <typename T>
BasicTensor<T> ScaledDotProductAttention(const BasicTensor<T>& q, const BasicTensor<T>& k,
                                         const BasicTensor<T>& v, std::size_t heads);
// Full (non-causal) multi-head self-attention of x (L, d) or (B, L, d).
template <typename T>
BasicTensor<T> MultiHeadAttention(const BasicTensor<T>& x, const AttentionWeights<T>& weights,
                                  std::size_t heads);
// Row-stochastic attention weights (B, heads, L, L) without recording; for
// inspection and tests.
template <typename T>
BasicTensor<T> AttentionProbabilities(const BasicTensor<T>& x, const AttentionWeights<T>& weights,
                                      std::size_t heads);

// ---------------------------------------------------------------------------
// Losses (scalar results).

// Mean of -log softmax(logits)[label]. With class weights w, the mean is
// weighted: sum_i w[y_i] * loss_i / sum_i w[y_i].
template <typename T>
BasicTensor<T> CrossEntropyLoss(const BasicTensor<T>& logits, std::span<const int> labels,
                                std::span<const T> class_weights = {});
// Mean squared error over entries whose mask is nonzero. The target is a
// constant.
template <typename T>
BasicTensor<T> MseLoss(const BasicTensor<T>& prediction, const BasicTensor<T>& target,
                       const BasicTensor<T>* mask = nullptr);

}  // namespace flusense::tensor
