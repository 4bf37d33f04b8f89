#pragma once

#include <vector>

#include "flusense/common/rng.hpp"
#include "flusense/model/config.hpp"
#include "flusense/tensor/checkpoint.hpp"
#include "flusense/tensor/ops.hpp"

namespace flusense::model {

using tensor::Tensor;

struct ConvLayer {
  Tensor weight;  // (out, in, K) for conv, (in, out, K) for deconv
  Tensor bias;
  Tensor gamma;  // batchnorm affine; undefined on the decoder output layer
  Tensor beta;
  tensor::BatchNormState<float> norm;
};

struct TransformerBlock {
  tensor::AttentionWeights<float> attention;
  Tensor norm1_gamma, norm1_beta;
  Tensor ff1_weight, ff1_bias;
  Tensor ff2_weight, ff2_bias;
  Tensor norm2_gamma, norm2_beta;
};

struct Head {
  HeadKind kind = HeadKind::kClassification;
  Tensor weight;  // (inputs, outputs)
  Tensor bias;
};

// Mirrored deconvolution stack used by the autoencoder task.
struct Decoder {
  Tensor projection_weight;  // (d_model, C_out)
  Tensor projection_bias;
  std::vector<ConvLayer> layers;  // applied in order, deepest first
  std::vector<std::size_t> output_padding;
};

struct ModelParams {
  ModelConfig config;
  std::vector<ConvLayer> conv;
  Tensor positional;  // W_p, (L_out, d_model)
  std::vector<TransformerBlock> blocks;
  Tensor final_gamma, final_beta;
  Head head;
  bool has_decoder = false;
  Decoder decoder;

  // Trainable tensors of the CNN, positional embedding and transformer.
  std::vector<Tensor> BackboneParameters() const;
  std::vector<Tensor> HeadParameters() const;
  std::vector<Tensor> DecoderParameters() const;
  std::vector<Tensor> TrainableParameters() const;

  // Every tensor in fixed serialization order, including batchnorm running
  // statistics. Head tensors are prefixed "head.", decoder tensors "decoder.".
  std::vector<tensor::NamedTensor> Named() const;
  // Independent deep copy.
  ModelParams Clone() const;
};

// Kaiming-uniform weights (heads: uniform +-1/sqrt(fan_in)), zero biases, unit norm scales and N(0, 0.02)
// positional embeddings.
ModelParams InitParams(const ModelConfig& config, Rng& rng, bool with_decoder = false);

// Replaces the head with a freshly initialized one.
void ResetHead(ModelParams& params, HeadKind kind, std::size_t outputs, Rng& rng);
void AttachDecoder(ModelParams& params, Rng& rng);

void SaveParams(const std::filesystem::path& stem, const ModelParams& params);
// Rebuilds params for `config` (plus the decoder when present in the
// checkpoint) and restores every stored tensor.
ModelParams LoadParams(const std::filesystem::path& stem, const ModelConfig& config);

}  // namespace flusense::model
