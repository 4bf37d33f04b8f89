#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "flusense/baseline/gbdt.hpp"
#include "flusense/datagen/cohort.hpp"
#include "flusense/datagen/splits.hpp"
#include "flusense/features/features.hpp"
#include "flusense/model/params.hpp"
#include "flusense/pipeline/config.hpp"
#include "flusense/pretrain/dataset.hpp"
#include "flusense/stats/metrics.hpp"

namespace flusense::pipeline {

struct RunOptions {
  // Artifacts are written here; empty writes nothing.
  std::filesystem::path out_dir;
  // Previously generated cohorts; empty generates from the config.
  std::filesystem::path data_dir;
  std::filesystem::path transfer_dir;
};

// Reads the cohort from `dir` when given, else generates it.
datagen::Cohort ObtainCohort(const datagen::CohortConfig& config, const std::filesystem::path& dir, int threads);

// Content digest over ids, profiles, minutes and labels.
std::string CohortDigest(const datagen::Cohort& cohort);

// Daily features of every (user, day) of a cohort.
class DailyFeatureTable {
 public:
  explicit DailyFeatureTable(const datagen::Cohort& cohort);
  const features::DailyFeatureVector& at(std::size_t user_index, int day_index) const {
    return rows_[user_index * static_cast<std::size_t>(days_) + static_cast<std::size_t>(day_index - 1)];
  }

 private:
  int days_;
  std::vector<features::DailyFeatureVector> rows_;
};

// One row per window: the window's daily vectors concatenated in day order.
baseline::FeatureMatrix ConcatenatedFeatures(const DailyFeatureTable& table, std::span<const datagen::WindowRef> refs,
                                             int window_days);
// One row per window: the whole-window aggregates. Reads are logged to
// `audit` under the cohort's name when given.
baseline::FeatureMatrix ZeroShotMatrix(const datagen::Cohort& cohort, std::span<const datagen::WindowRef> refs,
                                       int window_days, pretrain::AccessAudit* audit = nullptr);

std::vector<int> RefLabels(const datagen::Cohort& cohort, std::span<const datagen::WindowRef> refs,
                           datagen::Task task);

struct Metrics {
  double roc_auc = 0.5;
  double pr_auc = 0.0;
  std::size_t n = 0;
  std::size_t positives = 0;
};

Metrics Evaluate(std::span<const double> scores, std::span<const int> labels);
nlohmann::ordered_json ToJson(const Metrics& m);

stats::ScoredPredictions MakePredictions(std::span<const double> scores, std::span<const int> labels,
                                         std::span<const datagen::WindowRef> refs);

// Subset helpers.
template <typename T>
std::vector<T> Gather(std::span<const T> values, std::span<const std::size_t> indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(values[i]);
  return out;
}

// Pretty-printed JSON with a trailing newline.
void WriteJsonFile(const std::filesystem::path& path, const nlohmann::ordered_json& json);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);
void WriteCurveCsv(const std::filesystem::path& path, std::span<const stats::CurvePoint> points, const std::string& x,
                   const std::string& y);
void WritePredictionsCsv(const std::filesystem::path& path, const stats::ScoredPredictions& predictions);

struct ExperimentOutput {
  // Deterministic in config and seed.
  nlohmann::ordered_json report;
  // Run metadata, including wall-clock and artifact paths.
  nlohmann::ordered_json record;
};

nlohmann::ordered_json MakeRunRecord(const ExperimentConfig& config, const std::string& input_digest,
                                     double wall_seconds, const std::vector<std::string>& checkpoints,
                                     const nlohmann::ordered_json& metrics);

// report.json and run_record.json under options.out_dir.
void WriteOutputs(const RunOptions& options, const ExperimentOutput& output);

// Names and float32 bytes of every tensor outside the head and decoder.
std::string BackboneBlob(const model::ModelParams& params);

// Runs fn(0..n-1); in parallel when threads > 1.
void ParallelFor(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace flusense::pipeline
