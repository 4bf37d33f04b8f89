#include "flusense/pretrain/losses.hpp"

#include <algorithm>

#include "flusense/common/errors.hpp"
#include "flusense/features/features.hpp"
#include "flusense/tensor/ops.hpp"

namespace flusense::pretrain {

Tensor SameUserLoss(const Tensor& a, const Tensor& b, std::span<const int> same_user, model::ModelParams& params,
                    model::Mode mode) {
  if (params.head.kind != model::HeadKind::kPairClassification) {
    throw ConfigError("same-user loss needs a pair-classification head");
  }
  return tensor::CrossEntropyLoss(model::PredictPair(a, b, params, mode), same_user);
}

Tensor AutoencodeLoss(const Tensor& input, const Tensor& observed, model::ModelParams& params, model::Mode mode) {
  if (input.rank() != 3) throw DimensionError("autoencoder loss expects a batched input");
  const std::size_t batch = input.dim(0), channels = input.dim(1), m = input.dim(2);
  const std::size_t streams = params.config.streams;
  // Target: the value channels of the input.
  auto target = Tensor::Zeros({batch, streams, m});
  for (std::size_t b = 0; b < batch; ++b) {
    const auto src = input.data().subspan(b * channels * m, streams * m);
    std::copy(src.begin(), src.end(), target.data().begin() + static_cast<std::ptrdiff_t>(b * streams * m));
  }
  return AutoencodeLoss(input, target, observed, params, mode);
}

Tensor AutoencodeLoss(const Tensor& input, const Tensor& target, const Tensor& observed,
                      model::ModelParams& params, model::Mode mode) {
  if (!params.has_decoder) throw ConfigError("autoencoder loss needs a decoder");
  if (input.rank() != 3) throw DimensionError("autoencoder loss expects a batched input");
  const tensor::Shape shape{input.dim(0), params.config.streams, input.dim(2)};
  if (observed.shape() != shape || target.shape() != shape) {
    throw DimensionError("autoencoder target and mask must be " + tensor::ShapeString(shape));
  }
  if (std::none_of(observed.data().begin(), observed.data().end(), [](float v) { return v != 0.0f; })) {
    throw DataError("autoencoder loss: window has no observed entries");
  }
  return tensor::MseLoss(model::Reconstruct(input, params, mode), target, &observed);
}

Tensor DomainFeatureLoss(const Tensor& input, const Tensor& targets, model::ModelParams& params, model::Mode mode) {
  if (params.head.kind != model::HeadKind::kRegression ||
      params.config.head_outputs != features::kDailyFeatureCount) {
    throw ConfigError("domain-feature loss needs a regression head with 17 outputs");
  }
  return tensor::MseLoss(model::Predict(input, params, mode), targets);
}

}  // namespace flusense::pretrain
