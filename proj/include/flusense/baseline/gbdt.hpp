#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

namespace flusense::baseline {

// Dense row-major feature matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  void AppendRow(std::span<const double> x);
};

struct GbdtParams {
  int rounds = 100;
  int max_depth = 6;
  double learning_rate = 1.0;
  double lambda = 1.0;
  double min_child_hessian = 1.0;
  double min_split_gain = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // rows with x[feature] < threshold go left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf output, already scaled by the learning rate
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double Predict(std::span<const double> x) const;
  int Depth() const;
};

struct GbdtModel {
  std::vector<Tree> trees;
  double learning_rate = 1.0;
  int max_depth = 6;
  double base_score = 0.0;  // log-odds of the training prevalence
  std::size_t feature_count = 0;
  // Mean logistic loss on the training set after 0, 1, ... rounds.
  std::vector<double> train_loss;
};

// Second-order boosting on the logistic loss with exact greedy level-wise
// splits. Throws DataError unless both classes are present and every value
// is finite.
GbdtModel GbdtFit(const FeatureMatrix& x, std::span<const int> y, const GbdtParams& params = {});

std::vector<double> GbdtPredictMargin(const GbdtModel& model, const FeatureMatrix& x);
// Throws DimensionError when the width differs from training.
std::vector<double> GbdtPredictProba(const GbdtModel& model, const FeatureMatrix& x);

double MeanLogisticLoss(std::span<const double> margins, std::span<const int> y);

nlohmann::ordered_json ToJson(const GbdtModel& model);
GbdtModel GbdtFromJson(const nlohmann::json& json);

}  // namespace flusense::baseline
