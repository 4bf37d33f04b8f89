#include "flusense/model/config.hpp"

#include <fstream>
#include <set>

#include "flusense/common/errors.hpp"
#include "flusense/tensor/ops.hpp"

namespace flusense::model {

std::string_view HeadKindName(HeadKind kind) {
  switch (kind) {
    case HeadKind::kClassification:
      return "classification";
    case HeadKind::kRegression:
      return "regression";
    case HeadKind::kPairClassification:
      return "pair_classification";
  }
  return "classification";
}

HeadKind ParseHeadKind(std::string_view name) {
  if (name == "classification") return HeadKind::kClassification;
  if (name == "regression") return HeadKind::kRegression;
  if (name == "pair_classification") return HeadKind::kPairClassification;
  throw ConfigError("unknown head kind: " + std::string(name));
}

std::vector<std::size_t> ModelConfig::LayerLengths() const {
  std::vector<std::size_t> lengths{window_minutes};
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (kernel_sizes[i] > lengths.back()) {
      throw ConfigError("conv layer " + std::to_string(i) + " kernel exceeds its input length");
    }
    lengths.push_back(tensor::Conv1dOutputLength(lengths.back(), kernel_sizes[i], strides[i]));
  }
  return lengths;
}

void ModelConfig::Validate() const {
  if (channels.empty()) throw ConfigError("at least one conv layer is required");
  if (kernel_sizes.size() != channels.size() || strides.size() != channels.size()) {
    throw ConfigError("kernel_sizes, strides and channels must have equal length");
  }
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (kernel_sizes[i] == 0 || strides[i] == 0 || channels[i] == 0) {
      throw ConfigError("conv kernel, stride and channel counts must be positive");
    }
  }
  if (streams == 0 || window_minutes == 0) throw ConfigError("streams and window must be positive");
  if (d_model != channels.back()) throw ConfigError("d_model must equal the last conv channel count");
  if (heads == 0 || d_model % heads != 0) throw ConfigError("d_model must be divisible by heads");
  if (ff_dim == 0) throw ConfigError("ff_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  if (head_outputs == 0) throw ConfigError("head_outputs must be positive");
  if (head_kind == HeadKind::kPairClassification && head_outputs != 2) {
    throw ConfigError("pair heads have exactly 2 outputs");
  }
  (void)LayerLengths();
}

ModelConfig FastProfileConfig() {
  ModelConfig config;
  config.window_minutes = 1440;
  return config;
}

nlohmann::ordered_json ToJson(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["window_minutes"] = c.window_minutes;
  j["streams"] = c.streams;
  j["missingness_flags"] = c.missingness_flags;
  j["kernel_sizes"] = c.kernel_sizes;
  j["strides"] = c.strides;
  j["channels"] = c.channels;
  j["blocks"] = c.blocks;
  j["heads"] = c.heads;
  j["d_model"] = c.d_model;
  j["ff_dim"] = c.ff_dim;
  j["dropout"] = c.dropout;
  j["head_kind"] = HeadKindName(c.head_kind);
  j["head_outputs"] = c.head_outputs;
  return j;
}

ModelConfig ConfigFromJson(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> kKeys = {
      "window_minutes", "streams", "missingness_flags", "kernel_sizes", "strides",
      "channels",       "blocks",  "heads",             "d_model",      "ff_dim",
      "dropout",        "head_kind", "head_outputs"};
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw ConfigError("unknown model config key: " + key);
  }
  ModelConfig c;
  try {
    c.window_minutes = j.value("window_minutes", c.window_minutes);
    c.streams = j.value("streams", c.streams);
    c.missingness_flags = j.value("missingness_flags", c.missingness_flags);
    c.kernel_sizes = j.value("kernel_sizes", c.kernel_sizes);
    c.strides = j.value("strides", c.strides);
    c.channels = j.value("channels", c.channels);
    c.blocks = j.value("blocks", c.blocks);
    c.heads = j.value("heads", c.heads);
    c.d_model = j.value("d_model", c.d_model);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.dropout = j.value("dropout", c.dropout);
    if (j.contains("head_kind")) c.head_kind = ParseHeadKind(j.at("head_kind").get<std::string>());
    c.head_outputs = j.value("head_outputs", c.head_outputs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  c.Validate();
  return c;
}

ModelConfig LoadConfig(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config " + path.string());
  try {
    return ConfigFromJson(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("model config " + path.string() + ": " + e.what());
  }
}

ModelConfig Ablate(const ModelConfig& config, std::string_view which) {
  ModelConfig out = config;
  if (which == "identity") return out;
  if (which == "no_transformer") {
    out.blocks = 0;
    return out;
  }
  if (which == "no_pretrain_no_flags") {
    out.missingness_flags = false;
    return out;
  }
  throw ConfigError("unknown ablation: " + std::string(which));
}

}  // namespace flusense::model
