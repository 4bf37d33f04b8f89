#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "flusense/stats/tests.hpp"

namespace flusense::stats {

// Models x tasks grid of one metric; higher is better.
struct TaskResultMatrix {
  std::string metric = "roc_auc";
  std::vector<std::string> models;
  std::vector<std::string> tasks;
  std::vector<std::vector<double>> values;  // values[model][task]
  std::vector<std::vector<int>> positives;  // optional, same shape

  // Throws DataError on holes, ragged rows or non-finite values.
  void Validate() const;
};

struct PairwiseComparison {
  int a = 0;
  int b = 0;
  double w = 0.0;
  double p = 1.0;
  double p_holm = 1.0;
  bool significant = false;
};

struct CriticalDifference {
  double alpha = 0.1;
  FriedmanResult friedman;
  bool gated = false;  // Friedman did not reject; no pair is significant
  std::vector<int> order;  // model indices by ascending average rank
  std::vector<PairwiseComparison> pairs;
  // Maximal runs (in rank order) of mutually non-significant models.
  std::vector<std::vector<int>> cliques;

  bool Significant(int a, int b) const;
};

CriticalDifference ComputeCriticalDifference(const TaskResultMatrix& m, double alpha = 0.1);

std::string RenderText(const TaskResultMatrix& m, const CriticalDifference& cd);
std::string RenderSvg(const TaskResultMatrix& m, const CriticalDifference& cd);

nlohmann::json ToJson(const TaskResultMatrix& m);
nlohmann::json ToJson(const TaskResultMatrix& m, const CriticalDifference& cd);

}  // namespace flusense::stats
