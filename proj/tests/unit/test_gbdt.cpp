#include <doctest.h>

#include <cmath>

#include "flusense/baseline/gbdt.hpp"
#include "flusense/common/errors.hpp"
#include "flusense/common/rng.hpp"

using namespace flusense;
using namespace flusense::baseline;

namespace {

double PairwiseAuc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
    }
  }
  return wins / pairs;
}

void RandomProblem(Rng& rng, std::size_t n, std::size_t f, FeatureMatrix& x, std::vector<int>& y) {
  x = FeatureMatrix(n, f);
  y.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double signal = 0.0;
    for (std::size_t j = 0; j < f; ++j) {
      const double v = std::round(rng.Normal() * 4.0) / 4.0;
      x.row(i)[j] = v;
      if (j < 2) signal += v;
    }
    y[i] = rng.Bernoulli(1.0 / (1.0 + std::exp(-1.5 * signal))) ? 1 : 0;
  }
}

}  // namespace

TEST_CASE("single stump separates 1-D separable data") {
  FeatureMatrix x(20, 1);
  std::vector<int> y(20);
  for (int i = 0; i < 20; ++i) {
    x.row(i)[0] = i;
    y[i] = i >= 10;
  }
  const auto m = GbdtFit(x, y, {.rounds = 1, .max_depth = 1});
  CHECK(m.trees.size() == 1);
  CHECK(m.trees[0].Depth() == 1);
  CHECK(m.trees[0].nodes[0].threshold == doctest::Approx(9.5));
  CHECK(PairwiseAuc(GbdtPredictProba(m, x), y) == 1.0);
}

TEST_CASE("constant features predict the prevalence") {
  FeatureMatrix x(40, 3);
  std::vector<int> y(40, 0);
  for (int i = 0; i < 10; ++i) y[i] = 1;
  const auto m = GbdtFit(x, y, {.rounds = 5});
  for (const double p : GbdtPredictProba(m, x)) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(m.base_score == doctest::Approx(std::log(0.25 / 0.75)));
}

TEST_CASE("empty model predicts the base rate") {
  FeatureMatrix x(4, 1);
  const std::vector<int> y{0, 1, 0, 1};
  const auto m = GbdtFit(x, y, {.rounds = 0});
  for (const double p : GbdtPredictProba(m, x)) CHECK(p == 0.5);
}

TEST_CASE("training loss is non-increasing, depth bounded, outputs in (0,1)") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    FeatureMatrix x;
    std::vector<int> y;
    RandomProblem(rng, 300, 6, x, y);
    const auto m = GbdtFit(x, y, {.rounds = 30, .max_depth = 4});
    for (std::size_t r = 1; r < m.train_loss.size(); ++r) CHECK(m.train_loss[r] <= m.train_loss[r - 1]);
    for (const auto& t : m.trees) CHECK(t.Depth() <= 4);
    const auto p = GbdtPredictProba(m, x);
    for (const double v : p) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
    }
    CHECK(GbdtPredictProba(m, x) == p);
    CHECK(m.train_loss.back() == doctest::Approx(MeanLogisticLoss(GbdtPredictMargin(m, x), y)));
  }
}

TEST_CASE("root split matches brute-force enumeration on small instances") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    FeatureMatrix x;
    std::vector<int> y;
    RandomProblem(rng, 30, 3, x, y);
    int pos = 0;
    for (int v : y) pos += v;
    if (pos < 3 || pos > 27) continue;
    const double prev = pos / 30.0;
    const double g0 = prev, h0 = prev * (1 - prev);
    // Every (feature, cut) pair evaluated directly.
    double best = 0.0;
    for (std::size_t f = 0; f < 3; ++f) {
      for (std::size_t a = 0; a < 30; ++a) {
        const double cut = x.at(a, f);
        double gl = 0, hl = 0, gr = 0, hr = 0;
        for (std::size_t i = 0; i < 30; ++i) {
          const double g = g0 - y[i];
          (x.at(i, f) < cut ? gl : gr) += g;
          (x.at(i, f) < cut ? hl : hr) += h0;
        }
        if (hl < 1.0 || hr < 1.0) continue;
        const double gain = 0.5 * (gl * gl / (hl + 1) + gr * gr / (hr + 1) - (gl + gr) * (gl + gr) / (hl + hr + 1));
        best = std::max(best, gain);
      }
    }
    const auto m = GbdtFit(x, y, {.rounds = 1, .max_depth = 1});
    const auto& root = m.trees[0].nodes[0];
    if (best <= 0.0) {
      CHECK(root.feature == -1);
      continue;
    }
    REQUIRE(root.feature >= 0);
    double gl = 0, hl = 0, gr = 0, hr = 0;
    for (std::size_t i = 0; i < 30; ++i) {
      const double g = g0 - y[i];
      (x.at(i, root.feature) < root.threshold ? gl : gr) += g;
      (x.at(i, root.feature) < root.threshold ? hl : hr) += h0;
    }
    const double chosen = 0.5 * (gl * gl / (hl + 1) + gr * gr / (hr + 1) - (gl + gr) * (gl + gr) / (hl + hr + 1));
    CHECK(chosen == doctest::Approx(best).epsilon(1e-12));
  }
}

TEST_CASE("predictions are invariant to strictly increasing feature transforms") {
  Rng rng(21);
  FeatureMatrix x;
  std::vector<int> y;
  RandomProblem(rng, 30, 2, x, y);
  FeatureMatrix t = x;
  for (auto& v : t.values) v = std::exp(v) * 3.0 + 1.0;
  const auto a = GbdtFit(x, y, {.rounds = 10, .max_depth = 3});
  const auto b = GbdtFit(t, y, {.rounds = 10, .max_depth = 3});
  const auto pa = GbdtPredictProba(a, x);
  const auto pb = GbdtPredictProba(b, t);
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
}

TEST_CASE("errors and serialization") {
  FeatureMatrix x(4, 2);
  CHECK_THROWS_AS(GbdtFit(x, std::vector<int>{0, 0, 0, 0}), DataError);
  CHECK_THROWS_AS(GbdtFit(x, std::vector<int>{0, 1}), DimensionError);
  x.values[0] = std::nan("");
  CHECK_THROWS_AS(GbdtFit(x, std::vector<int>{0, 1, 0, 1}), DataError);

  Rng rng(2);
  FeatureMatrix z;
  std::vector<int> y;
  RandomProblem(rng, 200, 4, z, y);
  const auto m = GbdtFit(z, y, {.rounds = 8, .max_depth = 3});
  CHECK_THROWS_AS(GbdtPredictProba(m, FeatureMatrix(3, 5)), DimensionError);
  const auto back = GbdtFromJson(nlohmann::json::parse(ToJson(m).dump()));
  CHECK(GbdtPredictProba(back, z) == GbdtPredictProba(m, z));
}
