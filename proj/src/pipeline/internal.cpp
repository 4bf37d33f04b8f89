#include "internal.hpp"

#include <algorithm>

#include "flusense/common/errors.hpp"

namespace flusense::pipeline::internal {

std::filesystem::path Artifacts::Path(const std::string& relative) const {
  auto p = root_ / relative;
  std::filesystem::create_directories(p.parent_path());
  return p;
}

void Artifacts::Loss(const std::string& relative, std::span<const double> loss) const {
  if (enabled()) pretrain::WriteLossCsv(Path(relative), loss);
}

void Artifacts::Params(const std::string& stem, const model::ModelParams& params) {
  if (!enabled()) return;
  model::SaveParams(Path(stem), params);
  std::lock_guard lock(mutex_);
  checkpoints_.push_back(stem + ".json");
}

void Artifacts::Json(const std::string& relative, const nlohmann::ordered_json& json, bool checkpoint) {
  if (!enabled()) return;
  WriteJsonFile(Path(relative), json);
  std::lock_guard lock(mutex_);
  if (checkpoint) checkpoints_.push_back(relative);
}

std::vector<std::string> Artifacts::checkpoints() const {
  std::lock_guard lock(mutex_);
  auto out = checkpoints_;
  std::sort(out.begin(), out.end());
  return out;
}

void Artifacts::Text(const std::string& relative, const std::string& text) const {
  if (enabled()) WriteTextFile(Path(relative), text);
}

void Artifacts::Predictions(const std::string& relative, const stats::ScoredPredictions& predictions) const {
  if (enabled()) WritePredictionsCsv(Path(relative), predictions);
}

model::ModelConfig NeuralConfig(const ExperimentConfig& config, ModelKind kind) {
  switch (kind) {
    case ModelKind::kFullModel: return config.model;
    case ModelKind::kCnnOnly: return model::Ablate(config.model, "no_transformer");
    case ModelKind::kCnnTransformer: return model::Ablate(config.model, "no_pretrain_no_flags");
    case ModelKind::kGbdt: break;
  }
  throw ConfigError("gbdt is not a neural model");
}

bool Contains(const std::vector<ModelKind>& models, ModelKind kind) {
  return std::find(models.begin(), models.end(), kind) != models.end();
}

nlohmann::ordered_json FitJson(const pretrain::FitResult& fit) {
  return {{"epochs", fit.epoch_loss.size()}, {"best_epoch", fit.best_epoch}};
}

}  // namespace flusense::pipeline::internal
