#include "flusense/pretrain/dataset.hpp"

#include <cmath>
#include <numeric>

#include "flusense/common/errors.hpp"
#include "flusense/model/window.hpp"

namespace flusense::pretrain {

void AccessAudit::SetPhase(std::string phase) {
  std::lock_guard lock(mutex_);
  phase_ = std::move(phase);
}

std::string AccessAudit::phase() const {
  std::lock_guard lock(mutex_);
  return phase_;
}

void AccessAudit::Record(const std::string& cohort, std::size_t windows) {
  std::lock_guard lock(mutex_);
  if (!entries_.empty() && entries_.back().cohort == cohort && entries_.back().phase == phase_) {
    entries_.back().windows += windows;
    return;
  }
  entries_.push_back({cohort, phase_, windows});
}

std::vector<AccessAudit::Entry> AccessAudit::entries() const {
  std::lock_guard lock(mutex_);
  return entries_;
}

std::size_t AccessAudit::Reads(const std::string& cohort, const std::string& phase) const {
  std::lock_guard lock(mutex_);
  std::size_t total = 0;
  for (const auto& e : entries_) {
    if (e.cohort == cohort && e.phase == phase) total += e.windows;
  }
  return total;
}

WindowDataset::WindowDataset(const datagen::Cohort& cohort, std::vector<datagen::WindowRef> refs,
                             StreamStats stats, const model::ModelConfig& config)
    : cohort_(&cohort),
      refs_(std::move(refs)),
      stats_(stats),
      flags_(config.missingness_flags),
      window_days_(static_cast<int>(config.window_minutes / kMinutesPerDay)),
      channels_(config.input_channels()),
      minutes_(config.window_minutes) {
  if (config.window_minutes % kMinutesPerDay != 0) {
    throw ConfigError("window length must be a whole number of days");
  }
  if (config.streams != static_cast<std::size_t>(kStreamCount)) {
    throw ConfigError("model expects " + std::to_string(config.streams) + " streams, data has " +
                      std::to_string(kStreamCount));
  }
  for (const auto& r : refs_) {
    if (r.user_index >= cohort.users.size() || r.label_day - window_days_ < 1 || r.label_day > cohort.days()) {
      throw DataError("window reference outside the cohort");
    }
  }
}

StreamView WindowDataset::View(std::size_t i) const { return datagen::WindowView(*cohort_, refs_[i], window_days_); }

Tensor WindowDataset::Batch(std::span<const std::size_t> indices) const {
  auto out = Tensor::Zeros({indices.size(), channels_, minutes_});
  const std::size_t stride = channels_ * minutes_;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    model::EncodeInto(View(indices[b]), stats_, flags_, out.data().subspan(b * stride, stride));
  }
  if (audit_ != nullptr) audit_->Record(cohort_->config.name, indices.size());
  return out;
}

Tensor WindowDataset::ObservedMask(std::span<const std::size_t> indices) const {
  auto out = Tensor::Zeros({indices.size(), static_cast<std::size_t>(kStreamCount), minutes_});
  auto data = out.data();
  std::size_t k = 0;
  for (std::size_t idx : indices) {
    const auto view = View(idx);
    for (int s = 0; s < kStreamCount; ++s) {
      for (std::uint8_t v : view.streams[s]) data[k++] = v == kMissing ? 0.0f : 1.0f;
    }
  }
  return out;
}

bool WindowDataset::HasReadings(std::size_t i) const {
  const auto view = View(i);
  for (const auto& s : view.streams) {
    for (std::uint8_t v : s) {
      if (v != kMissing) return true;
    }
  }
  return false;
}

std::vector<int> TaskLabels(const WindowDataset& data, datagen::Task task) {
  std::vector<int> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.ref(i);
    out[i] = data.cohort().label(r.user_index, r.label_day).Label(task) ? 1 : 0;
  }
  return out;
}

std::vector<std::size_t> AllIndices(std::size_t n) {
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

FeatureTargets ComputeFeatureTargets(const WindowDataset& data, const FeatureScaler* scaler) {
  constexpr std::size_t kF = features::kDailyFeatureCount;
  const auto& cohort = data.cohort();
  std::vector<std::array<double, kF>> raw(data.size());
  FeatureTargets out;
  out.valid.assign(data.size(), false);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.ref(i);
    const auto day = cohort.Days(r.user_index, r.label_day - 1, r.label_day - 1);
    bool any = false;
    for (const auto& s : day.streams) {
      for (std::uint8_t v : s) any = any || v != kMissing;
    }
    if (!any) continue;
    out.valid[i] = true;
    raw[i] = features::DailyFeatures(day, cohort.users[r.user_index].bmr).ToArray();
  }

  if (scaler != nullptr) {
    out.scaler = *scaler;
  } else {
    std::array<double, kF> sum{}, sq{};
    double n = 0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!out.valid[i]) continue;
      n += 1;
      for (std::size_t f = 0; f < kF; ++f) sum[f] += raw[i][f];
    }
    if (n == 0) throw DataError("no window has a feature target");
    for (std::size_t f = 0; f < kF; ++f) out.scaler.mean[f] = sum[f] / n;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (!out.valid[i]) continue;
      for (std::size_t f = 0; f < kF; ++f) {
        const double d = raw[i][f] - out.scaler.mean[f];
        sq[f] += d * d;
      }
    }
    for (std::size_t f = 0; f < kF; ++f) {
      const double sd = std::sqrt(sq[f] / n);
      out.scaler.stddev[f] = sd > 1e-12 ? sd : 1.0;
    }
  }

  out.values.resize(data.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!out.valid[i]) {
      out.values[i].fill(0.0f);
      continue;
    }
    for (std::size_t f = 0; f < kF; ++f) {
      out.values[i][f] = static_cast<float>((raw[i][f] - out.scaler.mean[f]) / out.scaler.stddev[f]);
    }
  }
  return out;
}

}  // namespace flusense::pretrain
