#include "flusense/stats/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "flusense/common/errors.hpp"

namespace flusense::stats {

void ScoredPredictions::Add(double score, int label, std::int64_t user_id, int day_index) {
  scores.push_back(score);
  labels.push_back(label);
  user_ids.push_back(user_id);
  day_indices.push_back(day_index);
}

std::size_t ScoredPredictions::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

void ScoredPredictions::Validate() const {
  const std::size_t n = scores.size();
  if (labels.size() != n || user_ids.size() != n || day_indices.size() != n) {
    throw DimensionError("scored predictions have ragged arrays");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
  }
}

std::vector<double> MidRanks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
    i = j;
  }
  return ranks;
}

namespace {

void CheckInputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("labels must be 0 or 1");
  }
}

}  // namespace

double RocAuc(std::span<const double> scores, std::span<const int> labels) {
  CheckInputs(scores, labels);
  const auto ranks = MidRanks(scores);
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      pos += 1;
      rank_sum += ranks[i];
    }
  }
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("ROC AUC needs both classes");
  return (rank_sum - pos * (pos + 1) / 2) / (pos * neg);
}

double RocAuc(const ScoredPredictions& p) {
  p.Validate();
  return RocAuc(p.scores, p.labels);
}

double PrAuc(std::span<const double> scores, std::span<const int> labels) {
  CheckInputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) throw DataError("PR AUC needs at least one positive");
  double tp = 0, seen = 0, ap = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    double group_pos = 0;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      group_pos += labels[idx[j]];
      ++j;
    }
    tp += group_pos;
    seen += static_cast<double>(j - i);
    if (group_pos > 0) ap += (group_pos / total_pos) * (tp / seen);
    i = j;
  }
  return ap;
}

namespace {

// Cumulative (true, false) positive counts after each distinct score.
std::vector<std::array<double, 3>> Sweep(std::span<const double> scores, std::span<const int> labels) {
  CheckInputs(scores, labels);
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::array<double, 3>> out;
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1;
      ++j;
    }
    out.push_back({scores[idx[i]], tp, fp});
    i = j;
  }
  return out;
}

}  // namespace

std::vector<CurvePoint> RocCurve(std::span<const double> scores, std::span<const int> labels) {
  const auto sweep = Sweep(scores, labels);
  const double pos = sweep.empty() ? 0 : sweep.back()[1], neg = sweep.empty() ? 0 : sweep.back()[2];
  if (pos == 0 || neg == 0) throw DataError("ROC curve needs both classes");
  std::vector<CurvePoint> out{{INFINITY, 0.0, 0.0}};
  for (const auto& [thr, tp, fp] : sweep) out.push_back({thr, fp / neg, tp / pos});
  return out;
}

std::vector<CurvePoint> PrCurve(std::span<const double> scores, std::span<const int> labels) {
  const auto sweep = Sweep(scores, labels);
  const double pos = sweep.empty() ? 0 : sweep.back()[1];
  if (pos == 0) throw DataError("PR curve needs at least one positive");
  std::vector<CurvePoint> out;
  for (const auto& [thr, tp, fp] : sweep) out.push_back({thr, tp / pos, tp / (tp + fp)});
  return out;
}

double PrAuc(const ScoredPredictions& p) {
  p.Validate();
  return PrAuc(p.scores, p.labels);
}

}  // namespace flusense::stats
