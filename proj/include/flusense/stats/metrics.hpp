#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace flusense::stats {

// One score per (user, day) example.
struct ScoredPredictions {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<std::int64_t> user_ids;
  std::vector<int> day_indices;

  void Add(double score, int label, std::int64_t user_id = 0, int day_index = 0);
  std::size_t size() const { return scores.size(); }
  std::size_t positives() const;
  // Throws DimensionError on ragged arrays, DataError on labels outside {0,1}.
  void Validate() const;
};

// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> MidRanks(std::span<const double> values);

// Probability that a random positive outscores a random negative, ties
// counted as one half. Throws DataError unless both classes are present.
double RocAuc(std::span<const double> scores, std::span<const int> labels);
double RocAuc(const ScoredPredictions& p);

// Average precision. Examples with equal scores form one threshold: the
// whole group is admitted at once and its positives are credited with the
// precision at the end of the group. All-equal scores therefore give the
// prevalence exactly. Throws DataError without positives.
double PrAuc(std::span<const double> scores, std::span<const int> labels);
double PrAuc(const ScoredPredictions& p);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;  // ROC: false positive rate; PR: recall
  double y = 0.0;  // ROC: true positive rate; PR: precision
};

// One point per distinct score, thresholds descending, starting from the
// empty prediction set at (0, 0) for ROC. Recall never decreases along the
// PR curve.
std::vector<CurvePoint> RocCurve(std::span<const double> scores, std::span<const int> labels);
std::vector<CurvePoint> PrCurve(std::span<const double> scores, std::span<const int> labels);

}  // namespace flusense::stats
