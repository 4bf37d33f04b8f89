#include "flusense/model/forward.hpp"

#include "flusense/common/errors.hpp"

namespace flusense::model {
namespace {

using namespace flusense::tensor;

Tensor Batched(const Tensor& input, std::size_t channels, std::size_t minutes) {
  if (input.rank() == 2) return Reshape(input, {1, input.dim(0), input.dim(1)});
  if (input.rank() != 3 || input.dim(1) != channels || input.dim(2) != minutes) {
    throw DimensionError("model input must be (" + std::to_string(channels) + ", " +
                         std::to_string(minutes) + ") or batched, got " +
                         ShapeString(input.shape()));
  }
  return input;
}

Tensor Unbatch(const Tensor& x, bool was_batched) {
  if (was_batched) return x;
  Shape shape(x.shape().begin() + 1, x.shape().end());
  return Reshape(x, shape);
}

Tensor MaybeDropout(const Tensor& x, double p, Mode mode) {
  if (!mode.training || p == 0.0) return x;
  if (mode.rng == nullptr) throw ConfigError("training mode requires an rng");
  return Dropout(x, p, true, *mode.rng);
}

Tensor EncodeBatched(const Tensor& x, ModelParams& params, Mode mode) {
  const auto& config = params.config;
  Tensor h = x;
  for (std::size_t i = 0; i < params.conv.size(); ++i) {
    auto& layer = params.conv[i];
    h = Conv1d(h, layer.weight, layer.bias, config.strides[i]);
    h = BatchNorm1d(h, layer.gamma, layer.beta, layer.norm, mode.training);
    h = Relu(h);
  }
  return h;
}

Tensor TransformBatched(const Tensor& xbar, ModelParams& params, Mode mode) {
  const auto& config = params.config;
  if (xbar.dim(1) != config.d_model || xbar.dim(2) != params.positional.dim(0)) {
    throw DimensionError("Transform: expected (B, " + std::to_string(config.d_model) + ", " +
                         std::to_string(params.positional.dim(0)) + "), got " +
                         ShapeString(xbar.shape()));
  }
  Tensor h = AddBroadcast(TransposeLast2(xbar), params.positional);
  for (auto& block : params.blocks) {
    Tensor a = MultiHeadAttention(h, block.attention, config.heads);
    a = MaybeDropout(a, config.dropout, mode);
    h = LayerNorm(Add(h, a), block.norm1_gamma, block.norm1_beta);
    Tensor f = Relu(Linear(h, block.ff1_weight, block.ff1_bias));
    f = MaybeDropout(f, config.dropout, mode);
    f = Linear(f, block.ff2_weight, block.ff2_bias);
    h = LayerNorm(Add(h, f), block.norm2_gamma, block.norm2_beta);
  }
  return LayerNorm(h, params.final_gamma, params.final_beta);
}

}  // namespace

Tensor CnnEncode(const Tensor& input, ModelParams& params, Mode mode) {
  const auto& c = params.config;
  const Tensor x = Batched(input, c.input_channels(), c.window_minutes);
  return Unbatch(EncodeBatched(x, params, mode), input.rank() == 3);
}

Tensor Transform(const Tensor& xbar, ModelParams& params, Mode mode) {
  const bool batched = xbar.rank() == 3;
  const Tensor x = batched ? xbar : Reshape(xbar, {1, xbar.dim(0), xbar.dim(1)});
  return Unbatch(TransformBatched(x, params, mode), batched);
}

Tensor Embed(const Tensor& input, ModelParams& params, Mode mode) {
  const auto& c = params.config;
  const Tensor x = Batched(input, c.input_channels(), c.window_minutes);
  const Tensor e = TransformBatched(EncodeBatched(x, params, mode), params, mode);
  return Unbatch(Mean(e, 1), input.rank() == 3);
}

Tensor ApplyHead(const Tensor& pooled, ModelParams& params, Mode mode) {
  if (pooled.dim(pooled.rank() - 1) != params.head.weight.dim(0)) {
    throw DimensionError("head expects width " + std::to_string(params.head.weight.dim(0)) +
                         ", got " + ShapeString(pooled.shape()));
  }
  const Tensor x = MaybeDropout(pooled, params.config.dropout, mode);
  return Linear(x, params.head.weight, params.head.bias);
}

Tensor Predict(const Tensor& input, ModelParams& params, Mode mode) {
  if (params.head.kind == HeadKind::kPairClassification) {
    throw ConfigError("Predict: pair head requires PredictPair");
  }
  return ApplyHead(Embed(input, params, mode), params, mode);
}

Tensor PredictPair(const Tensor& a, const Tensor& b, ModelParams& params, Mode mode) {
  if (params.head.kind != HeadKind::kPairClassification) {
    throw ConfigError("PredictPair: model has no pair head");
  }
  return ApplyHead(Concat(Embed(a, params, mode), Embed(b, params, mode)), params, mode);
}

Tensor Reconstruct(const Tensor& input, ModelParams& params, Mode mode) {
  if (!params.has_decoder) throw ConfigError("Reconstruct: model has no decoder");
  const auto& c = params.config;
  const Tensor x = Batched(input, c.input_channels(), c.window_minutes);
  const Tensor e = TransformBatched(EncodeBatched(x, params, mode), params, mode);
  auto& dec = params.decoder;
  // (B, L, d) -> (B, C_out, L)
  Tensor h = TransposeLast2(Linear(e, dec.projection_weight, dec.projection_bias));
  for (std::size_t step = 0; step < dec.layers.size(); ++step) {
    auto& layer = dec.layers[step];
    const std::size_t i = dec.layers.size() - 1 - step;
    h = Deconv1d(h, layer.weight, layer.bias, c.strides[i], dec.output_padding[step]);
    if (layer.gamma.defined()) {
      h = BatchNorm1d(h, layer.gamma, layer.beta, layer.norm, mode.training);
      h = Relu(h);
    }
  }
  return h;
}

}  // namespace flusense::model
