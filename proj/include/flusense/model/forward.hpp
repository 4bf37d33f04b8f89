#pragma once

#include "flusense/common/rng.hpp"
#include "flusense/model/params.hpp"

namespace flusense::model {

// Training mode enables dropout and batch statistics; eval mode is a pure
// function of (input, params). `rng` is only drawn from in training mode.
struct Mode {
  bool training = false;
  Rng* rng = nullptr;
};

// (C_in, m) or (B, C_in, m) -> X̄ of shape (C_out, L_out) or (B, C_out, L_out).
Tensor CnnEncode(const Tensor& input, ModelParams& params, Mode mode);
// X̄ -> E of shape (L_out, d_model) or (B, L_out, d_model).
Tensor Transform(const Tensor& xbar, ModelParams& params, Mode mode);
// Mean of E over the sequence axis: (d_model) or (B, d_model).
Tensor Embed(const Tensor& input, ModelParams& params, Mode mode);
// Head applied to pooled embeddings (dropout first); (B, head_inputs) in.
Tensor ApplyHead(const Tensor& pooled, ModelParams& params, Mode mode);
// Classification logits or regression outputs: (k) or (B, k).
Tensor Predict(const Tensor& input, ModelParams& params, Mode mode);
// Same-user logits from the concatenated embeddings of two batches.
Tensor PredictPair(const Tensor& a, const Tensor& b, ModelParams& params, Mode mode);
// Autoencoder reconstruction of the value channels: (B, streams, m).
Tensor Reconstruct(const Tensor& input, ModelParams& params, Mode mode);

}  // namespace flusense::model
