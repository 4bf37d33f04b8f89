#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "flusense/datagen/cohort.hpp"
#include "flusense/datagen/splits.hpp"
#include "flusense/features/features.hpp"
#include "flusense/model/config.hpp"
#include "flusense/tensor/tensor.hpp"

namespace flusense::pretrain {

using tensor::Tensor;

// Log of which cohort's windows were materialized in which phase. The
// pipeline sets the phase around each fit or scoring call and inspects the
// log afterwards.
class AccessAudit {
 public:
  struct Entry {
    std::string cohort;
    std::string phase;
    std::size_t windows = 0;
  };

  void SetPhase(std::string phase);
  std::string phase() const;
  void Record(const std::string& cohort, std::size_t windows);
  std::vector<Entry> entries() const;
  // Windows of `cohort` read while the phase was `phase`.
  std::size_t Reads(const std::string& cohort, const std::string& phase) const;

 private:
  mutable std::mutex mutex_;
  std::string phase_ = "none";
  std::vector<Entry> entries_;
};

// Windows of one cohort, encoded on demand with fixed z-scoring statistics.
// The cohort must outlive the dataset.
class WindowDataset {
 public:
  WindowDataset(const datagen::Cohort& cohort, std::vector<datagen::WindowRef> refs, StreamStats stats,
                const model::ModelConfig& config);

  std::size_t size() const { return refs_.size(); }
  const datagen::WindowRef& ref(std::size_t i) const { return refs_[i]; }
  const std::vector<datagen::WindowRef>& refs() const { return refs_; }
  const datagen::Cohort& cohort() const { return *cohort_; }
  const StreamStats& stats() const { return stats_; }
  int window_days() const { return window_days_; }
  std::size_t channels() const { return channels_; }
  std::size_t minutes() const { return minutes_; }

  void set_audit(AccessAudit* audit) { audit_ = audit; }

  StreamView View(std::size_t i) const;
  // (B, channels, minutes) model input.
  Tensor Batch(std::span<const std::size_t> indices) const;
  // (B, streams, minutes): 1 where the reading is present.
  Tensor ObservedMask(std::span<const std::size_t> indices) const;
  // True when the window holds at least one reading.
  bool HasReadings(std::size_t i) const;

 private:
  const datagen::Cohort* cohort_;
  std::vector<datagen::WindowRef> refs_;
  StreamStats stats_;
  bool flags_;
  int window_days_;
  std::size_t channels_;
  std::size_t minutes_;
  AccessAudit* audit_ = nullptr;
};

// Label of each window's prediction day for `task`.
std::vector<int> TaskLabels(const WindowDataset& data, datagen::Task task);

std::vector<std::size_t> AllIndices(std::size_t n);

// Per-feature z-scoring of daily feature vectors.
struct FeatureScaler {
  std::array<double, features::kDailyFeatureCount> mean{};
  std::array<double, features::kDailyFeatureCount> stddev{};
};

// Standardized daily features of each window's final day.
struct FeatureTargets {
  std::vector<std::array<float, features::kDailyFeatureCount>> values;
  // False when the final day has no reading at all (missing target).
  std::vector<bool> valid;
  FeatureScaler scaler;
};

// Scaler fitted on the valid targets of `data` unless one is supplied.
FeatureTargets ComputeFeatureTargets(const WindowDataset& data, const FeatureScaler* scaler = nullptr);

}  // namespace flusense::pretrain
