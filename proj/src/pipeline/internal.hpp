#pragma once

#include <chrono>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "flusense/model/params.hpp"
#include "flusense/pipeline/config.hpp"
#include "flusense/pipeline/runners.hpp"
#include "flusense/pretrain/train.hpp"

namespace flusense::pipeline {
using tensor::Tensor;
}  // namespace flusense::pipeline

namespace flusense::pipeline::internal {

class Stopwatch {
 public:
  double Seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Collects artifact writes under an optional output directory.
class Artifacts {
 public:
  explicit Artifacts(std::filesystem::path root) : root_(std::move(root)) {}

  bool enabled() const { return !root_.empty(); }
  std::filesystem::path Path(const std::string& relative) const;
  void Loss(const std::string& relative, std::span<const double> loss) const;
  void Params(const std::string& stem, const model::ModelParams& params);
  void Json(const std::string& relative, const nlohmann::ordered_json& json, bool checkpoint = false);
  void Text(const std::string& relative, const std::string& text) const;
  void Predictions(const std::string& relative, const stats::ScoredPredictions& predictions) const;
  // Sorted, so parallel runs list them identically.
  std::vector<std::string> checkpoints() const;

 private:
  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::vector<std::string> checkpoints_;
};

// Model configuration of a neural baseline.
model::ModelConfig NeuralConfig(const ExperimentConfig& config, ModelKind kind);

bool Contains(const std::vector<ModelKind>& models, ModelKind kind);

nlohmann::ordered_json FitJson(const pretrain::FitResult& fit);

}  // namespace flusense::pipeline::internal
