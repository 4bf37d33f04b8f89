#include "flusense/model/params.hpp"

#include <cmath>

#include "flusense/common/errors.hpp"

namespace flusense::model {
namespace {

Tensor KaimingUniform(tensor::Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  auto t = Tensor::Zeros(std::move(shape), true);
  for (auto& v : t.data()) v = static_cast<float>(rng.Uniform(-bound, bound));
  return t;
}

Tensor ZerosParam(std::size_t n) { return Tensor::Zeros({n}, true); }
Tensor OnesParam(std::size_t n) { return Tensor::Full({n}, 1.0f, true); }

Tensor LinearWeight(std::size_t in, std::size_t out, Rng& rng) {
  return KaimingUniform({in, out}, in, rng);
}

void AddLayer(std::vector<tensor::NamedTensor>& out, const std::string& prefix,
              const ConvLayer& layer) {
  out.push_back({prefix + ".weight", layer.weight});
  out.push_back({prefix + ".bias", layer.bias});
  if (layer.gamma.defined()) {
    out.push_back({prefix + ".bn_gamma", layer.gamma});
    out.push_back({prefix + ".bn_beta", layer.beta});
    out.push_back({prefix + ".bn_running_mean", layer.norm.running_mean});
    out.push_back({prefix + ".bn_running_var", layer.norm.running_var});
  }
}

void AddLayerParams(std::vector<Tensor>& out, const ConvLayer& layer) {
  out.push_back(layer.weight);
  out.push_back(layer.bias);
  if (layer.gamma.defined()) {
    out.push_back(layer.gamma);
    out.push_back(layer.beta);
  }
}

Tensor CopyTensor(const Tensor& t) {
  if (!t.defined()) return t;
  auto copy = t.Detach();
  copy.set_requires_grad(t.requires_grad());
  return copy;
}

ConvLayer CopyLayer(const ConvLayer& l) {
  ConvLayer c;
  c.weight = CopyTensor(l.weight);
  c.bias = CopyTensor(l.bias);
  c.gamma = CopyTensor(l.gamma);
  c.beta = CopyTensor(l.beta);
  c.norm = l.norm;
  c.norm.running_mean = CopyTensor(l.norm.running_mean);
  c.norm.running_var = CopyTensor(l.norm.running_var);
  return c;
}

}  // namespace

std::vector<Tensor> ModelParams::BackboneParameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : conv) AddLayerParams(out, layer);
  out.push_back(positional);
  for (const auto& b : blocks) {
    const auto& a = b.attention;
    for (const auto& t : {a.query_weight, a.query_bias, a.key_weight, a.key_bias, a.value_weight,
                          a.value_bias, a.output_weight, a.output_bias, b.norm1_gamma,
                          b.norm1_beta, b.ff1_weight, b.ff1_bias, b.ff2_weight, b.ff2_bias,
                          b.norm2_gamma, b.norm2_beta}) {
      out.push_back(t);
    }
  }
  out.push_back(final_gamma);
  out.push_back(final_beta);
  return out;
}

std::vector<Tensor> ModelParams::HeadParameters() const { return {head.weight, head.bias}; }

std::vector<Tensor> ModelParams::DecoderParameters() const {
  std::vector<Tensor> out;
  if (!has_decoder) return out;
  out.push_back(decoder.projection_weight);
  out.push_back(decoder.projection_bias);
  for (const auto& layer : decoder.layers) AddLayerParams(out, layer);
  return out;
}

std::vector<Tensor> ModelParams::TrainableParameters() const {
  auto out = BackboneParameters();
  for (const auto& t : HeadParameters()) out.push_back(t);
  for (const auto& t : DecoderParameters()) out.push_back(t);
  return out;
}

std::vector<tensor::NamedTensor> ModelParams::Named() const {
  std::vector<tensor::NamedTensor> out;
  for (std::size_t i = 0; i < conv.size(); ++i) AddLayer(out, "conv." + std::to_string(i), conv[i]);
  out.push_back({"positional", positional});
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string p = "block." + std::to_string(i) + ".";
    const auto& b = blocks[i];
    const auto& a = b.attention;
    out.push_back({p + "attn.query_weight", a.query_weight});
    out.push_back({p + "attn.query_bias", a.query_bias});
    out.push_back({p + "attn.key_weight", a.key_weight});
    out.push_back({p + "attn.key_bias", a.key_bias});
    out.push_back({p + "attn.value_weight", a.value_weight});
    out.push_back({p + "attn.value_bias", a.value_bias});
    out.push_back({p + "attn.output_weight", a.output_weight});
    out.push_back({p + "attn.output_bias", a.output_bias});
    out.push_back({p + "norm1.gamma", b.norm1_gamma});
    out.push_back({p + "norm1.beta", b.norm1_beta});
    out.push_back({p + "ff1.weight", b.ff1_weight});
    out.push_back({p + "ff1.bias", b.ff1_bias});
    out.push_back({p + "ff2.weight", b.ff2_weight});
    out.push_back({p + "ff2.bias", b.ff2_bias});
    out.push_back({p + "norm2.gamma", b.norm2_gamma});
    out.push_back({p + "norm2.beta", b.norm2_beta});
  }
  out.push_back({"final_norm.gamma", final_gamma});
  out.push_back({"final_norm.beta", final_beta});
  out.push_back({"head.weight", head.weight});
  out.push_back({"head.bias", head.bias});
  if (has_decoder) {
    out.push_back({"decoder.projection.weight", decoder.projection_weight});
    out.push_back({"decoder.projection.bias", decoder.projection_bias});
    for (std::size_t i = 0; i < decoder.layers.size(); ++i) {
      AddLayer(out, "decoder.deconv." + std::to_string(i), decoder.layers[i]);
    }
  }
  return out;
}

ModelParams ModelParams::Clone() const {
  ModelParams c;
  c.config = config;
  for (const auto& l : conv) c.conv.push_back(CopyLayer(l));
  c.positional = CopyTensor(positional);
  for (const auto& b : blocks) {
    TransformerBlock n;
    const auto& a = b.attention;
    n.attention = {CopyTensor(a.query_weight), CopyTensor(a.query_bias),
                   CopyTensor(a.key_weight),   CopyTensor(a.key_bias),
                   CopyTensor(a.value_weight), CopyTensor(a.value_bias),
                   CopyTensor(a.output_weight), CopyTensor(a.output_bias)};
    n.norm1_gamma = CopyTensor(b.norm1_gamma);
    n.norm1_beta = CopyTensor(b.norm1_beta);
    n.ff1_weight = CopyTensor(b.ff1_weight);
    n.ff1_bias = CopyTensor(b.ff1_bias);
    n.ff2_weight = CopyTensor(b.ff2_weight);
    n.ff2_bias = CopyTensor(b.ff2_bias);
    n.norm2_gamma = CopyTensor(b.norm2_gamma);
    n.norm2_beta = CopyTensor(b.norm2_beta);
    c.blocks.push_back(std::move(n));
  }
  c.final_gamma = CopyTensor(final_gamma);
  c.final_beta = CopyTensor(final_beta);
  c.head = {head.kind, CopyTensor(head.weight), CopyTensor(head.bias)};
  c.has_decoder = has_decoder;
  if (has_decoder) {
    c.decoder.projection_weight = CopyTensor(decoder.projection_weight);
    c.decoder.projection_bias = CopyTensor(decoder.projection_bias);
    for (const auto& l : decoder.layers) c.decoder.layers.push_back(CopyLayer(l));
    c.decoder.output_padding = decoder.output_padding;
  }
  return c;
}

ModelParams InitParams(const ModelConfig& config, Rng& rng, bool with_decoder) {
  config.Validate();
  ModelParams p;
  p.config = config;
  const auto lengths = config.LayerLengths();
  std::size_t in = config.input_channels();
  Rng conv_rng = rng.Split("conv");
  for (std::size_t i = 0; i < config.conv_layers(); ++i) {
    const std::size_t out = config.channels[i];
    const std::size_t k = config.kernel_sizes[i];
    ConvLayer layer;
    layer.weight = KaimingUniform({out, in, k}, in * k, conv_rng);
    layer.bias = ZerosParam(out);
    layer.gamma = OnesParam(out);
    layer.beta = ZerosParam(out);
    layer.norm = tensor::BatchNormState<float>::Create(out);
    p.conv.push_back(std::move(layer));
    in = out;
  }
  const std::size_t d = config.d_model;
  Rng pos_rng = rng.Split("positional");
  p.positional = Tensor::Zeros({lengths.back(), d}, true);
  for (auto& v : p.positional.data()) v = static_cast<float>(pos_rng.Normal(0.0, 0.02));
  Rng block_rng = rng.Split("blocks");
  for (std::size_t i = 0; i < config.blocks; ++i) {
    Rng r = block_rng.Split(i);
    TransformerBlock b;
    b.attention = {LinearWeight(d, d, r), ZerosParam(d), LinearWeight(d, d, r), ZerosParam(d),
                   LinearWeight(d, d, r), ZerosParam(d), LinearWeight(d, d, r), ZerosParam(d)};
    b.norm1_gamma = OnesParam(d);
    b.norm1_beta = ZerosParam(d);
    b.ff1_weight = LinearWeight(d, config.ff_dim, r);
    b.ff1_bias = ZerosParam(config.ff_dim);
    b.ff2_weight = LinearWeight(config.ff_dim, d, r);
    b.ff2_bias = ZerosParam(d);
    b.norm2_gamma = OnesParam(d);
    b.norm2_beta = ZerosParam(d);
    p.blocks.push_back(std::move(b));
  }
  p.final_gamma = OnesParam(d);
  p.final_beta = ZerosParam(d);
  Rng head_rng = rng.Split("head");
  ResetHead(p, config.head_kind, config.head_outputs, head_rng);
  if (with_decoder) {
    Rng dec_rng = rng.Split("decoder");
    AttachDecoder(p, dec_rng);
  }
  return p;
}

void ResetHead(ModelParams& params, HeadKind kind, std::size_t outputs, Rng& rng) {
  if (kind == HeadKind::kPairClassification && outputs != 2) {
    throw ConfigError("pair heads have exactly 2 outputs");
  }
  params.config.head_kind = kind;
  params.config.head_outputs = outputs;
  const std::size_t in = params.config.head_inputs();
  // Uniform(+-1/sqrt(in)) keeps initial logits small, so an untrained
  // classifier starts near chance level.
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  auto weight = Tensor::Zeros({in, outputs}, true);
  for (auto& v : weight.data()) v = static_cast<float>(rng.Uniform(-bound, bound));
  params.head = {kind, weight, ZerosParam(outputs)};
}

void AttachDecoder(ModelParams& params, Rng& rng) {
  const auto& config = params.config;
  const auto lengths = config.LayerLengths();
  const std::size_t q = config.conv_layers();
  Decoder dec;
  dec.projection_weight = LinearWeight(config.d_model, config.channels.back(), rng);
  dec.projection_bias = ZerosParam(config.channels.back());
  std::size_t length = lengths.back();
  for (std::size_t step = 0; step < q; ++step) {
    const std::size_t i = q - 1 - step;  // mirrored conv layer
    const std::size_t in = config.channels[i];
    const std::size_t out = i == 0 ? config.streams : config.channels[i - 1];
    const std::size_t k = config.kernel_sizes[i];
    const std::size_t s = config.strides[i];
    const std::size_t plain = tensor::Deconv1dOutputLength(length, k, s);
    // Restores the exact input length of the mirrored conv layer; the
    // remainder dropped by the floor in the conv length formula is < stride.
    const std::size_t pad = lengths[i] - plain;
    ConvLayer layer;
    layer.weight = KaimingUniform({in, out, k}, in * k, rng);
    layer.bias = ZerosParam(out);
    if (i != 0) {
      layer.gamma = OnesParam(out);
      layer.beta = ZerosParam(out);
      layer.norm = tensor::BatchNormState<float>::Create(out);
    }
    dec.layers.push_back(std::move(layer));
    dec.output_padding.push_back(pad);
    length = lengths[i];
  }
  params.decoder = std::move(dec);
  params.has_decoder = true;
}

void SaveParams(const std::filesystem::path& stem, const ModelParams& params) {
  tensor::SaveCheckpoint(stem, params.Named());
}

ModelParams LoadParams(const std::filesystem::path& stem, const ModelConfig& config) {
  const auto stored = tensor::LoadCheckpoint(stem);
  bool decoder = false;
  ModelConfig c = config;
  for (const auto& t : stored) {
    if (t.name.rfind("decoder.", 0) == 0) decoder = true;
    if (t.name == "head.weight") {
      const std::size_t in = t.tensor.dim(0);
      c.head_outputs = t.tensor.dim(1);
      if (in == 2 * c.d_model) {
        c.head_kind = HeadKind::kPairClassification;
      } else if (c.head_kind == HeadKind::kPairClassification) {
        c.head_kind = HeadKind::kClassification;
      }
    }
  }
  Rng rng(0);
  auto params = InitParams(c, rng, decoder);
  auto named = params.Named();
  tensor::RestoreInto(stored, named);
  return params;
}

}  // namespace flusense::model
