#include "flusense/baseline/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flusense/common/errors.hpp"

namespace flusense::baseline {
namespace {

double Sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double Score(double g, double h, double lambda) { return g * g / (h + lambda); }

struct NodeStats {
  double g = 0.0;
  double h = 0.0;
};

struct Candidate {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;
};

// Grows one tree on gradients g and hessians h with exact greedy splits,
// one level at a time over presorted feature columns.
Tree GrowTree(const FeatureMatrix& x, const std::vector<std::vector<std::size_t>>& sorted,
              const std::vector<double>& g, const std::vector<double>& h, const GbdtParams& p) {
  const std::size_t n = x.rows;
  Tree tree;
  tree.nodes.push_back({});
  std::vector<int> node_of(n, 0);
  std::vector<int> frontier{0};
  std::vector<NodeStats> totals(1);
  for (std::size_t i = 0; i < n; ++i) {
    totals[0].g += g[i];
    totals[0].h += h[i];
  }

  for (int depth = 0; depth < p.max_depth && !frontier.empty(); ++depth) {
    // Position of each frontier node in the per-level arrays.
    std::vector<int> slot(tree.nodes.size(), -1);
    for (std::size_t k = 0; k < frontier.size(); ++k) slot[frontier[k]] = static_cast<int>(k);
    std::vector<NodeStats> node_total(frontier.size());
    for (std::size_t k = 0; k < frontier.size(); ++k) node_total[k] = totals[frontier[k]];
    std::vector<Candidate> best(frontier.size());

    std::vector<NodeStats> left(frontier.size());
    std::vector<double> last_value(frontier.size());
    std::vector<char> seen(frontier.size());
    for (std::size_t f = 0; f < x.cols; ++f) {
      std::fill(left.begin(), left.end(), NodeStats{});
      std::fill(seen.begin(), seen.end(), 0);
      for (const std::size_t i : sorted[f]) {
        const int s = slot[node_of[i]];
        if (s < 0) continue;
        const double v = x.at(i, f);
        auto& l = left[s];
        if (seen[s] && v > last_value[s]) {
          const auto& t = node_total[s];
          const double hl = l.h, hr = t.h - l.h;
          if (hl >= p.min_child_hessian && hr >= p.min_child_hessian) {
            const double gain = 0.5 * (Score(l.g, hl, p.lambda) + Score(t.g - l.g, hr, p.lambda) -
                                       Score(t.g, t.h, p.lambda));
            if (gain > best[s].gain) {
              best[s] = {gain, static_cast<int>(f), 0.5 * (last_value[s] + v)};
            }
          }
        }
        l.g += g[i];
        l.h += h[i];
        last_value[s] = v;
        seen[s] = 1;
      }
    }

    std::vector<int> next;
    for (std::size_t k = 0; k < frontier.size(); ++k) {
      const auto& b = best[k];
      if (b.feature < 0 || b.gain <= p.min_split_gain) continue;
      const int id = frontier[k];
      const int l = static_cast<int>(tree.nodes.size());
      tree.nodes.push_back({});
      tree.nodes.push_back({});
      totals.resize(tree.nodes.size());
      tree.nodes[id].feature = b.feature;
      tree.nodes[id].threshold = b.threshold;
      tree.nodes[id].left = l;
      tree.nodes[id].right = l + 1;
      next.push_back(l);
      next.push_back(l + 1);
    }
    if (next.empty()) break;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& node = tree.nodes[node_of[i]];
      if (node.feature < 0) continue;
      node_of[i] = x.at(i, node.feature) < node.threshold ? node.left : node.right;
      totals[node_of[i]].g += g[i];
      totals[node_of[i]].h += h[i];
    }
    frontier = std::move(next);
  }
  for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
    auto& node = tree.nodes[id];
    if (node.feature < 0) node.value = -totals[id].g / (totals[id].h + p.lambda);
  }
  return tree;
}

void CheckWidth(const GbdtModel& model, const FeatureMatrix& x) {
  if (x.cols != model.feature_count) {
    throw DimensionError("GBDT expects " + std::to_string(model.feature_count) + " features, got " +
                         std::to_string(x.cols));
  }
}

}  // namespace

void FeatureMatrix::AppendRow(std::span<const double> x) {
  if (rows == 0 && cols == 0) cols = x.size();
  if (x.size() != cols) throw DimensionError("FeatureMatrix: row width mismatch");
  values.insert(values.end(), x.begin(), x.end());
  ++rows;
}

double Tree::Predict(std::span<const double> x) const {
  int id = 0;
  while (nodes[id].feature >= 0) {
    id = x[nodes[id].feature] < nodes[id].threshold ? nodes[id].left : nodes[id].right;
  }
  return nodes[id].value;
}

int Tree::Depth() const {
  std::vector<int> depth(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t id = 0; id < nodes.size(); ++id) {
    if (nodes[id].feature < 0) continue;
    depth[nodes[id].left] = depth[nodes[id].right] = depth[id] + 1;
    deepest = std::max(deepest, depth[id] + 1);
  }
  return deepest;
}

double MeanLogisticLoss(std::span<const double> margins, std::span<const int> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < margins.size(); ++i) {
    const double z = margins[i];
    // log(1 + exp(-z)) for positives, log(1 + exp(z)) for negatives.
    const double s = y[i] ? -z : z;
    total += s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  }
  return total / static_cast<double>(margins.size());
}

GbdtModel GbdtFit(const FeatureMatrix& x, std::span<const int> y, const GbdtParams& p) {
  if (y.size() != x.rows) throw DimensionError("GbdtFit: label count differs from row count");
  if (p.rounds < 0 || p.max_depth < 0 || p.learning_rate <= 0.0 || p.lambda < 0.0) {
    throw ConfigError("GbdtFit: invalid parameters");
  }
  std::size_t positives = 0;
  for (const int v : y) {
    if (v != 0 && v != 1) throw DataError("GbdtFit: labels must be 0/1");
    positives += v;
  }
  if (positives == 0 || positives == y.size()) throw DataError("GbdtFit: both classes are required");
  for (const double v : x.values) {
    if (!std::isfinite(v)) throw DataError("GbdtFit: features must be finite");
  }

  GbdtModel model;
  model.learning_rate = p.learning_rate;
  model.max_depth = p.max_depth;
  model.feature_count = x.cols;
  const double prevalence = static_cast<double>(positives) / static_cast<double>(y.size());
  model.base_score = std::log(prevalence / (1.0 - prevalence));

  std::vector<std::vector<std::size_t>> sorted(x.cols);
  for (std::size_t f = 0; f < x.cols; ++f) {
    sorted[f].resize(x.rows);
    std::iota(sorted[f].begin(), sorted[f].end(), 0);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](std::size_t a, std::size_t b) { return x.at(a, f) < x.at(b, f); });
  }

  std::vector<double> margin(x.rows, model.base_score), g(x.rows), h(x.rows), delta(x.rows);
  double loss = MeanLogisticLoss(margin, y);
  model.train_loss.push_back(loss);
  for (int round = 0; round < p.rounds; ++round) {
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double prob = Sigmoid(margin[i]);
      g[i] = prob - y[i];
      h[i] = std::max(prob * (1.0 - prob), 1e-16);
    }
    Tree tree = GrowTree(x, sorted, g, h, p);
    for (auto& node : tree.nodes) node.value *= p.learning_rate;
    for (std::size_t i = 0; i < x.rows; ++i) delta[i] = tree.Predict(x.row(i));
    // Newton steps can overshoot the logistic loss; halve the step until
    // the training loss does not increase.
    double scale = 1.0;
    std::vector<double> trial(x.rows);
    double trial_loss = loss;
    for (int attempt = 0; attempt < 30; ++attempt) {
      for (std::size_t i = 0; i < x.rows; ++i) trial[i] = margin[i] + scale * delta[i];
      trial_loss = MeanLogisticLoss(trial, y);
      if (trial_loss <= loss) break;
      scale *= 0.5;
    }
    if (trial_loss > loss) {
      scale = 0.0;
      trial_loss = loss;
      trial = margin;
    }
    if (scale != 1.0) {
      for (auto& node : tree.nodes) node.value *= scale;
    }
    margin.swap(trial);
    loss = trial_loss;
    model.train_loss.push_back(loss);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

std::vector<double> GbdtPredictMargin(const GbdtModel& model, const FeatureMatrix& x) {
  CheckWidth(model, x);
  std::vector<double> out(x.rows, model.base_score);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (const auto& t : model.trees) out[i] += t.Predict(x.row(i));
  }
  return out;
}

std::vector<double> GbdtPredictProba(const GbdtModel& model, const FeatureMatrix& x) {
  auto out = GbdtPredictMargin(model, x);
  for (auto& v : out) v = Sigmoid(v);
  return out;
}

nlohmann::ordered_json ToJson(const GbdtModel& model) {
  nlohmann::ordered_json j;
  j["format"] = "flusense-gbdt";
  j["learning_rate"] = model.learning_rate;
  j["max_depth"] = model.max_depth;
  j["base_score"] = model.base_score;
  j["feature_count"] = model.feature_count;
  j["train_loss"] = model.train_loss;
  auto trees = nlohmann::ordered_json::array();
  for (const auto& t : model.trees) {
    nlohmann::ordered_json tj;
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    for (const auto& n : t.nodes) {
      feature.push_back(n.feature);
      threshold.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      value.push_back(n.value);
    }
    tj["feature"] = feature;
    tj["threshold"] = threshold;
    tj["left"] = left;
    tj["right"] = right;
    tj["value"] = value;
    trees.push_back(std::move(tj));
  }
  j["trees"] = std::move(trees);
  return j;
}

GbdtModel GbdtFromJson(const nlohmann::json& j) {
  try {
    if (j.at("format") != "flusense-gbdt") throw DataError("not a GBDT model");
    GbdtModel m;
    m.learning_rate = j.at("learning_rate").get<double>();
    m.max_depth = j.at("max_depth").get<int>();
    m.base_score = j.at("base_score").get<double>();
    m.feature_count = j.at("feature_count").get<std::size_t>();
    m.train_loss = j.at("train_loss").get<std::vector<double>>();
    for (const auto& tj : j.at("trees")) {
      const auto feature = tj.at("feature").get<std::vector<int>>();
      const auto threshold = tj.at("threshold").get<std::vector<double>>();
      const auto left = tj.at("left").get<std::vector<int>>();
      const auto right = tj.at("right").get<std::vector<int>>();
      const auto value = tj.at("value").get<std::vector<double>>();
      Tree t;
      for (std::size_t k = 0; k < feature.size(); ++k) {
        t.nodes.push_back({feature[k], threshold.at(k), left.at(k), right.at(k), value.at(k)});
      }
      m.trees.push_back(std::move(t));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("GBDT model JSON: ") + e.what());
  }
}

}  // namespace flusense::baseline
