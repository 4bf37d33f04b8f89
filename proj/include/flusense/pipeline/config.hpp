#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flusense/baseline/gbdt.hpp"
#include "flusense/datagen/cohort.hpp"
#include "flusense/model/config.hpp"
#include "flusense/pretrain/train.hpp"

namespace flusense::pipeline {

enum class Profile { kFast, kFull };

std::string_view ProfileName(Profile profile);
Profile ParseProfile(std::string_view name);

enum class ModelKind { kGbdt, kCnnOnly, kCnnTransformer, kFullModel };

std::string_view ModelKindName(ModelKind kind);
ModelKind ParseModelKind(std::string_view name);

struct ExperimentConfig {
  std::string name = "experiment";
  Profile profile = Profile::kFull;
  datagen::CohortConfig cohort;
  datagen::CohortConfig transfer = datagen::TransferCohortConfig();
  // Full model; the CNN and CNN-Transformer baselines are ablations of it.
  model::ModelConfig model;
  pretrain::PretrainSpec pretrain;
  // Head-only finetuning of pretrained models.
  pretrain::FinetuneSpec finetune;
  // End-to-end training of models without pretraining.
  pretrain::FinetuneSpec supervised;
  baseline::GbdtParams gbdt;
  std::vector<datagen::Task> tasks;
  std::vector<ModelKind> models;
  std::uint64_t seed = 1;
  int folds = 20;
  // Experiment 3 scores every positive and this many sampled negatives of
  // the held-out folds; 0 scores everything.
  std::size_t eval_negatives = 2000;
  double alpha = 0.1;
  int threads = 1;

  // Throws ConfigError.
  void Validate() const;
  int window_days() const { return static_cast<int>(model.window_minutes / kMinutesPerDay); }
};

// Profile defaults: the full profile uses 7-day windows, the fast profile
// 1-day windows.
ExperimentConfig DefaultExperimentConfig(Profile profile);

// Preset per experiment: "exp1", "exp2", "exp3", "exp4", "null_control".
ExperimentConfig PresetConfig(std::string_view experiment, Profile profile);

nlohmann::ordered_json ToJson(const ExperimentConfig& config);
// `base_dir` resolves "cohort", "transfer" and "model" entries given as
// file paths. Unknown keys are rejected.
ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& json, const std::filesystem::path& base_dir = {},
                                          const ExperimentConfig& defaults = DefaultExperimentConfig(Profile::kFull));
ExperimentConfig LoadExperimentConfig(const std::filesystem::path& path,
                                      const ExperimentConfig& defaults = DefaultExperimentConfig(Profile::kFull));

// 16 hex digits of FNV-1a over the canonical JSON of the config.
std::string ConfigHash(const ExperimentConfig& config);
std::string HexDigest(std::string_view bytes);

}  // namespace flusense::pipeline
