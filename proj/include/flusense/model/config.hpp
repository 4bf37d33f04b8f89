#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace flusense::model {

enum class HeadKind { kClassification, kRegression, kPairClassification };

std::string_view HeadKindName(HeadKind kind);
HeadKind ParseHeadKind(std::string_view name);

struct ModelConfig {
  std::size_t window_minutes = 10080;
  std::size_t streams = 5;
  // Appends one binary missingness channel per stream to the input.
  bool missingness_flags = true;
  std::vector<std::size_t> kernel_sizes{5, 5, 2};
  std::vector<std::size_t> strides{5, 3, 2};
  std::vector<std::size_t> channels{8, 16, 32};
  std::size_t blocks = 2;
  std::size_t heads = 4;
  std::size_t d_model = 32;
  std::size_t ff_dim = 128;
  double dropout = 0.4;
  HeadKind head_kind = HeadKind::kClassification;
  // Class count for classification, target width for regression; pair heads
  // always have 2 outputs.
  std::size_t head_outputs = 2;

  std::size_t input_channels() const { return missingness_flags ? 2 * streams : streams; }
  std::size_t conv_layers() const { return channels.size(); }
  // Sequence length after every conv layer, input length first.
  std::vector<std::size_t> LayerLengths() const;
  std::size_t encoded_length() const { return LayerLengths().back(); }
  std::size_t head_inputs() const {
    return head_kind == HeadKind::kPairClassification ? 2 * d_model : d_model;
  }

  // Throws ConfigError on inconsistent settings.
  void Validate() const;
};

// Reduced configuration used by the fast profile: one-day windows.
ModelConfig FastProfileConfig();

nlohmann::ordered_json ToJson(const ModelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
ModelConfig ConfigFromJson(const nlohmann::json& json);
ModelConfig LoadConfig(const std::filesystem::path& path);

// "identity", "no_transformer" (no transformer blocks) or
// "no_pretrain_no_flags" (value channels only).
ModelConfig Ablate(const ModelConfig& config, std::string_view which);

}  // namespace flusense::model
