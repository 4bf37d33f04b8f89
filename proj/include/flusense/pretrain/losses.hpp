#pragma once

#include <span>

#include "flusense/model/forward.hpp"

namespace flusense::pretrain {

using tensor::Tensor;

// Cross-entropy of the same-user prediction from the concatenated pooled
// embeddings of a and b, both (B, C, m). Needs a pair-classification head.
Tensor SameUserLoss(const Tensor& a, const Tensor& b, std::span<const int> same_user,
                    model::ModelParams& params, model::Mode mode);

// Mean squared reconstruction error of the value channels over observed
// entries only. `observed` is (B, streams, m). Needs a decoder; throws
// DataError when nothing is observed.
Tensor AutoencodeLoss(const Tensor& input, const Tensor& observed, model::ModelParams& params,
                      model::Mode mode);
// Same with an explicit (B, streams, m) target.
Tensor AutoencodeLoss(const Tensor& input, const Tensor& target, const Tensor& observed,
                      model::ModelParams& params, model::Mode mode);

// Mean squared error against standardized daily-feature targets (B, 17).
// Needs a regression head with 17 outputs.
Tensor DomainFeatureLoss(const Tensor& input, const Tensor& targets, model::ModelParams& params,
                         model::Mode mode);

}  // namespace flusense::pretrain
