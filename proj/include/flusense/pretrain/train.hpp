#pragma once

#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "flusense/common/rng.hpp"
#include "flusense/model/forward.hpp"
#include "flusense/pretrain/dataset.hpp"

namespace flusense::pretrain {

enum class PretrainTask { kSameUser, kAutoencoder, kDomainFeatures };

std::string_view PretrainTaskName(PretrainTask task);
PretrainTask ParsePretrainTask(std::string_view name);

struct PretrainSpec {
  PretrainTask task = PretrainTask::kDomainFeatures;
  std::size_t pair_count = 10000;  // same-user task only
  // Windows sampled per epoch for the single-window tasks; 0 uses all.
  std::size_t windows_per_epoch = 0;
  int epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 5e-4;

  void Validate() const;
};

nlohmann::json ToJson(const PretrainSpec& spec);
PretrainSpec PretrainSpecFromJson(const nlohmann::json& j);

struct PretrainResult {
  model::ModelParams params;
  std::vector<double> epoch_loss;  // mean training batch loss per epoch
  FeatureScaler scaler;            // domain-feature task only
};

// Trains a freshly initialized model of `config` on the self-supervised task.
PretrainResult Pretrain(const WindowDataset& data, const PretrainSpec& spec, const model::ModelConfig& config,
                        Rng& rng);
// Continues training `params` (head/decoder already matching the task).
PretrainResult Pretrain(const WindowDataset& data, const PretrainSpec& spec, model::ModelParams params, Rng& rng);

// Gives `params` the head or decoder the task needs, drawn from `rng`.
void PrepareForTask(model::ModelParams& params, PretrainTask task, Rng& rng);

struct FinetuneSpec {
  int epochs = 10;
  std::size_t batch_size = 16;
  double learning_rate = 5e-4;
  // Stratified share of the training windows held out for early stopping.
  double validation_fraction = 0.1;
  bool early_stopping = true;
  int patience = 3;
  double positive_weight = 1.0;
  // Negatives sampled per epoch (all positives are always used); 0 uses all.
  std::size_t negatives_per_epoch = 0;
  // Multiplies positive_weight by negatives/positives per epoch.
  bool balance_classes = false;
  // Keeps adding epochs until this many optimizer steps have run.
  std::size_t min_steps = 0;

  void Validate() const;
};

nlohmann::json ToJson(const FinetuneSpec& spec);
FinetuneSpec FinetuneSpecFromJson(const nlohmann::json& j);

struct FitResult {
  model::ModelParams params;
  std::vector<double> epoch_loss;
  std::vector<double> validation_loss;
  int best_epoch = -1;  // -1 when no validation set was used
};

// Pooled embeddings (N, d_model) in inference mode.
Tensor EmbedWindows(model::ModelParams& params, const WindowDataset& data, std::span<const std::size_t> indices,
                    std::size_t batch_size = 64);

// Frozen-backbone finetuning: the head is replaced by a fresh 2-way
// classification head and only its parameters are trained, on embeddings
// computed once by the frozen backbone in inference mode.
FitResult FinetuneHead(const model::ModelParams& pretrained, const Tensor& embeddings, std::span<const int> labels,
                       const FinetuneSpec& spec, Rng& rng);
FitResult Finetune(const model::ModelParams& pretrained, const WindowDataset& data, std::span<const int> labels,
                   const FinetuneSpec& spec, Rng& rng);

// End-to-end supervised training of every non-decoder parameter.
FitResult TrainSupervised(model::ModelParams init, const WindowDataset& data, std::span<const int> labels,
                          const FinetuneSpec& spec, Rng& rng);

// Probability of class 1.
std::vector<double> ScoreWindows(model::ModelParams& params, const WindowDataset& data,
                                 std::span<const std::size_t> indices, std::size_t batch_size = 64);
std::vector<double> ScoreEmbeddings(model::ModelParams& params, const Tensor& embeddings);

// Rows of a 2-D tensor as a new leaf tensor.
Tensor GatherRows(const Tensor& matrix, std::span<const std::size_t> rows);

void WriteLossCsv(const std::filesystem::path& path, std::span<const double> loss);

}  // namespace flusense::pretrain
