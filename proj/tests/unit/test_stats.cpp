#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flusense/common/errors.hpp"
#include "flusense/common/rng.hpp"
#include "flusense/stats/critical_difference.hpp"
#include "flusense/stats/metrics.hpp"
#include "flusense/stats/tests.hpp"

using namespace flusense;
using namespace flusense::stats;

namespace {

double PairCountAuc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

// Precision at each positive's score (everything scoring at least as high
// is retrieved), averaged over positives.
double DefinitionAp(const std::vector<double>& s, const std::vector<int>& y) {
  double total = 0, pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    pos += 1;
    double retrieved = 0, hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] >= s[i]) {
        retrieved += 1;
        hits += y[j];
      }
    }
    total += hits / retrieved;
  }
  return total / pos;
}

void RandomLabeled(Rng& rng, std::size_t n, std::vector<double>& s, std::vector<int>& y, double grid = 0.0) {
  s.resize(n);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.Bernoulli(0.3) ? 1 : 0;
    double v = rng.Normal() + 0.8 * y[i];
    if (grid > 0) v = std::round(v / grid) * grid;
    s[i] = v;
  }
  y[0] = 1;
  y[1] = 0;
}

// Structural components straight from the pairwise kernel.
double DirectDelongVariance(const std::vector<double>& a, const std::vector<double>& b, const std::vector<int>& y) {
  auto psi = [](double p, double n) { return p > n ? 1.0 : (p == n ? 0.5 : 0.0); };
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < y.size(); ++i) (y[i] ? pos : neg).push_back(i);
  const double m = pos.size(), n = neg.size();
  std::vector<double> d10, d01;
  for (auto i : pos) {
    double s = 0;
    for (auto j : neg) s += psi(a[i], a[j]) - psi(b[i], b[j]);
    d10.push_back(s / n);
  }
  for (auto j : neg) {
    double s = 0;
    for (auto i : pos) s += psi(a[i], a[j]) - psi(b[i], b[j]);
    d01.push_back(s / m);
  }
  auto var = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double s = 0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / (v.size() - 1);
  };
  return var(d10) / m + var(d01) / n;
}

}  // namespace

TEST_CASE("roc auc examples") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(RocAuc(s, y) == 0.75);
  CHECK(RocAuc(std::vector<double>{0.1, 0.2, 0.9, 0.95}, y) == 1.0);
  CHECK(RocAuc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
  CHECK_THROWS_AS(RocAuc(s, std::vector<int>{1, 1, 1, 1}), DataError);
  CHECK_THROWS_AS(RocAuc(s, std::vector<int>{0, 1}), DimensionError);
  ScoredPredictions p;
  for (std::size_t i = 0; i < s.size(); ++i) p.Add(s[i], y[i], 7, static_cast<int>(i) + 1);
  CHECK(RocAuc(p) == 0.75);
  CHECK(p.positives() == 2);
}

TEST_CASE("roc auc equals the pairwise counting oracle and is transform invariant") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<int> y;
    RandomLabeled(rng, 2 + rng.UniformInt(0, 198), s, y, trial % 2 ? 0.25 : 0.0);
    const double auc = RocAuc(s, y);
    CHECK(std::abs(auc - PairCountAuc(s, y)) < 1e-12);
    std::vector<double> t(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(2.0 * s[i]) - 5.0;
    CHECK(RocAuc(t, y) == auc);
  }
}

TEST_CASE("pr auc examples and definition oracle") {
  const std::vector<int> y{1, 1, 0, 0, 0};
  CHECK(PrAuc(std::vector<double>{0.9, 0.8, 0.3, 0.2, 0.1}, y) == 1.0);
  std::vector<double> last(10);
  std::vector<int> one(10, 0);
  for (int i = 0; i < 10; ++i) last[i] = 10 - i;
  one[9] = 1;
  CHECK(PrAuc(last, one) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(PrAuc(std::vector<double>(5, 0.3), y) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK_THROWS_AS(PrAuc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), DataError);

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s;
    std::vector<int> y2;
    RandomLabeled(rng, 2 + rng.UniformInt(0, 150), s, y2, trial % 2 ? 0.5 : 0.0);
    CHECK(PrAuc(s, y2) == doctest::Approx(DefinitionAp(s, y2)).epsilon(1e-12));
  }
}

TEST_CASE("pr auc of random scores averages to the prevalence") {
  double sum = 0;
  for (int seed = 0; seed < 1000; ++seed) {
    Rng rng(1000 + seed);
    std::vector<double> s(1000);
    std::vector<int> y(1000, 0);
    for (int i = 0; i < 100; ++i) y[i] = 1;
    for (auto& v : s) v = rng.Uniform();
    sum += PrAuc(s, y);
  }
  CHECK(std::abs(sum / 1000 - 0.1) < 0.01);
}

TEST_CASE("delong matches the direct structural-components oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a, b;
    std::vector<int> y;
    RandomLabeled(rng, 6 + rng.UniformInt(0, 80), a, y, trial % 3 == 0 ? 0.5 : 0.0);
    y[2] = 1;
    y[3] = 0;
    b.resize(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) b[i] = 0.5 * a[i] + rng.Normal() * 0.8;
    const auto r = DelongTest(a, b, y);
    CHECK(r.auc_a == doctest::Approx(PairCountAuc(a, y)).epsilon(1e-12));
    CHECK(r.auc_b == doctest::Approx(PairCountAuc(b, y)).epsilon(1e-12));
    CHECK(r.variance == doctest::Approx(DirectDelongVariance(a, b, y)).epsilon(1e-10));
    CHECK(r.p >= 0.0);
    CHECK(r.p <= 1.0);

    std::vector<double> ta(a.size()), tb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ta[i] = std::atan(a[i]);
      tb[i] = std::atan(b[i]);
    }
    CHECK(DelongTest(ta, tb, y).p == doctest::Approx(r.p).epsilon(1e-12));
  }
}

TEST_CASE("delong identical scores") {
  const std::vector<double> a{0.2, 0.9, 0.4, 0.7, 0.1};
  const std::vector<int> y{0, 1, 0, 1, 1};
  const auto r = DelongTest(a, a, y);
  CHECK(r.z == 0.0);
  CHECK(r.p == 1.0);
}

TEST_CASE("delong variance shrinks as the classes balance") {
  const int n = 40;
  std::vector<double> mean_var;
  for (int m : {2, 4, 8, 12, 16, 20}) {
    double total = 0;
    for (int rep = 0; rep < 400; ++rep) {
      Rng rng(77 + rep);
      std::vector<double> a(n), b(n);
      std::vector<int> y(n, 0);
      for (int i = 0; i < n; ++i) {
        y[i] = i < m;
        a[i] = rng.Normal() + y[i];
        b[i] = rng.Normal() + 0.5 * y[i];
      }
      total += DelongTest(a, b, y).variance;
    }
    mean_var.push_back(total / 400);
  }
  for (std::size_t i = 1; i < mean_var.size(); ++i) CHECK(mean_var[i] < mean_var[i - 1]);
}

TEST_CASE("mann whitney") {
  const std::vector<double> lo{1, 2, 3}, hi{4, 5, 6, 7};
  CHECK(MannWhitneyU(lo, hi).u == 0.0);
  CHECK(MannWhitneyU(hi, lo).u == 12.0);
  CHECK(MannWhitneyU(lo, lo).p == 1.0);
  CHECK_THROWS_AS(MannWhitneyU({}, lo), DataError);

  // Exact path against relabelling every split of the pooled values.
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> x(4), y(4);
    for (auto& v : x) v = std::round(rng.Normal() * 2);
    for (auto& v : y) v = std::round(rng.Normal() * 2 + 1);
    std::vector<double> pooled(x);
    pooled.insert(pooled.end(), y.begin(), y.end());
    auto u_of = [&](const std::vector<int>& in_x) {
      double u = 0;
      for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
          if (in_x[i] && !in_x[j]) u += pooled[i] > pooled[j] ? 1 : (pooled[i] == pooled[j] ? 0.5 : 0);
        }
      }
      return u;
    };
    std::vector<int> mask{1, 1, 1, 1, 0, 0, 0, 0};
    const double u_obs = u_of(mask);
    std::sort(mask.begin(), mask.end());
    double two = 0, greater = 0, count = 0;
    do {
      const double u = u_of(mask);
      two += std::abs(u - 8) >= std::abs(u_obs - 8) - 1e-9;
      greater += u >= u_obs - 1e-9;
      count += 1;
    } while (std::next_permutation(mask.begin(), mask.end()));
    const auto r = MannWhitneyU(x, y);
    CHECK(r.exact);
    CHECK(r.u == u_obs);
    CHECK(r.p == doctest::Approx(two / count).epsilon(1e-12));
    CHECK(MannWhitneyU(x, y, Alternative::kGreater).p == doctest::Approx(greater / count).epsilon(1e-12));
  }

  // Normal approximation, reference values from a standard statistics package.
  const std::vector<double> a{0.61, 0.64, 0.58, 0.70, 0.66, 0.63, 0.69, 0.62, 0.65, 0.67};
  const std::vector<double> b{0.60, 0.59, 0.63, 0.57, 0.61, 0.62, 0.55, 0.58, 0.60, 0.56};
  const auto r = MannWhitneyU(a, b);
  CHECK_FALSE(r.exact);
  CHECK(r.u == 89.0);
  CHECK(r.p == doctest::Approx(0.003547636838517976).epsilon(1e-9));
  CHECK(MannWhitneyU(a, b, Alternative::kGreater).p == doctest::Approx(0.001773818419258988).epsilon(1e-9));
  CHECK(MannWhitneyU(b, a, Alternative::kLess).p == doctest::Approx(0.001773818419258988).epsilon(1e-9));
}

TEST_CASE("wilcoxon signed rank") {
  const std::vector<double> x{1.1, 2.3, 3.2, 4.9, 5.4, 6.8}, y{1, 2, 3, 4, 5, 6};
  const auto r = WilcoxonSignedRank(x, y);
  CHECK(r.w == 0.0);
  CHECK(r.exact);
  CHECK(r.p == doctest::Approx(0.03125).epsilon(1e-15));
  CHECK(WilcoxonSignedRank(y, x).p == r.p);
  CHECK_THROWS_AS(WilcoxonSignedRank(x, x), DataError);

  // Exact path against all 2^n sign patterns, ties included.
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 3 + static_cast<int>(rng.UniformInt(0, 9));
    std::vector<double> d(n), zero(n, 0.0);
    for (auto& v : d) {
      do v = std::round(rng.Normal() * 3) / 2;
      while (v == 0.0);
    }
    const auto got = WilcoxonSignedRank(d, zero);
    std::vector<double> mag(n);
    for (int i = 0; i < n; ++i) mag[i] = std::abs(d[i]);
    const auto ranks = MidRanks(mag);
    const double total = n * (n + 1) / 2.0;
    double hits = 0;
    for (int mask = 0; mask < (1 << n); ++mask) {
      double wp = 0;
      for (int i = 0; i < n; ++i) {
        if (mask & (1 << i)) wp += ranks[i];
      }
      hits += std::min(wp, total - wp) <= got.w + 1e-9;
    }
    CHECK(got.p == doctest::Approx(hits / (1 << n)).epsilon(1e-12));
  }

  const std::vector<double> big{0.3, -1.2, 0.8, 1.5, -0.4, 2.0, 0.9, 1.1, -0.2, 0.6, 1.3, 0.7, -0.9,
                                1.8, 0.5, 1.0, 0.4, -0.1, 1.6, 0.2, 1.4, -0.6, 0.1, 0.9, 1.2};
  const auto approx = WilcoxonSignedRank(big, std::vector<double>(big.size(), 0.0));
  CHECK_FALSE(approx.exact);
  CHECK(approx.w == 53.5);
  CHECK(approx.p == doctest::Approx(0.003345719386909649).epsilon(1e-9));
}

TEST_CASE("friedman") {
  std::vector<std::vector<double>> ordered(3, std::vector<double>(5));
  for (int t = 0; t < 5; ++t) {
    ordered[0][t] = 0.9;
    ordered[1][t] = 0.8;
    ordered[2][t] = 0.7;
  }
  const auto r = FriedmanTest(ordered);
  CHECK(r.chi2 == doctest::Approx(10.0).epsilon(1e-14));
  CHECK(r.p == doctest::Approx(0.006737946999085468).epsilon(1e-10));
  CHECK(r.average_ranks == std::vector<double>{1, 2, 3});

  const auto same = FriedmanTest(std::vector<std::vector<double>>(3, std::vector<double>(4, 0.5)));
  CHECK(same.chi2 == 0.0);
  CHECK(same.p == 1.0);
  CHECK(same.average_ranks == std::vector<double>{2, 2, 2});

  CHECK_THROWS_AS(FriedmanTest({{1, 2}, {2, 3}}), DataError);
  CHECK_THROWS_AS(FriedmanTest({{1}, {2}, {3}}), DataError);
  CHECK_THROWS_AS(FriedmanTest({{1, 2}, {2, 3}, {3}}), DataError);

  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 3 + static_cast<int>(rng.UniformInt(0, 4));
    const int n = 2 + static_cast<int>(rng.UniformInt(0, 10));
    std::vector<std::vector<double>> v(k, std::vector<double>(n));
    for (auto& row : v) {
      for (auto& x : row) x = std::round(rng.Uniform() * 6) / 6;
    }
    std::vector<double> rank_sum(k, 0.0);
    for (int t = 0; t < n; ++t) {
      for (int j = 0; j < k; ++j) {
        double better = 0, tied = 0;
        for (int o = 0; o < k; ++o) {
          if (o == j) continue;
          better += v[o][t] > v[j][t];
          tied += v[o][t] == v[j][t];
        }
        rank_sum[j] += 1 + better + 0.5 * tied;
      }
    }
    // Classical rank-sum form of the statistic.
    double sq = 0;
    for (double s : rank_sum) sq += s * s;
    const double chi2 = 12.0 / (n * k * (k + 1)) * sq - 3.0 * n * (k + 1);
    const auto got = FriedmanTest(v);
    CHECK(got.chi2 == doctest::Approx(chi2).epsilon(1e-10).scale(1.0));
    CHECK(got.p >= 0.0);
    CHECK(got.p <= 1.0);
  }
}

TEST_CASE("holm adjustment") {
  const std::vector<double> p{0.01, 0.04, 0.03, 0.2};
  const auto adj = HolmAdjust(p);
  CHECK(adj[0] == doctest::Approx(0.04));
  CHECK(adj[2] == doctest::Approx(0.09));
  CHECK(adj[1] == doctest::Approx(0.09));
  CHECK(adj[3] == doctest::Approx(0.2));
}

TEST_CASE("critical difference") {
  TaskResultMatrix m;
  m.models = {"full", "a", "b", "c"};
  Rng rng(17);
  for (int t = 0; t < 12; ++t) m.tasks.push_back("t" + std::to_string(t));
  m.values.assign(4, std::vector<double>(12));
  for (int t = 0; t < 12; ++t) {
    m.values[0][t] = 0.9 + 0.01 * rng.Uniform();
    for (int j = 1; j < 4; ++j) m.values[j][t] = 0.6 + 0.1 * rng.Uniform();
  }
  const auto cd = ComputeCriticalDifference(m, 0.1);
  CHECK_FALSE(cd.gated);
  CHECK(cd.order[0] == 0);
  CHECK(cd.friedman.average_ranks[0] == 1.0);
  bool alone = false;
  for (const auto& c : cd.cliques) {
    if (c == std::vector<int>{0}) alone = true;
    if (c.size() > 1) CHECK(std::find(c.begin(), c.end(), 0) == c.end());
  }
  CHECK(alone);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) CHECK(cd.Significant(a, b) == cd.Significant(b, a));
  }
  const auto text = RenderText(m, cd);
  const auto svg = RenderSvg(m, cd);
  CHECK(text.find("full") != std::string::npos);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("full (1.00)") != std::string::npos);
  const auto j = ToJson(m, cd);
  CHECK(j["order"][0] == "full");
  CHECK(j["pairwise"].size() == 6);

  TaskResultMatrix flat = m;
  for (auto& row : flat.values) {
    for (auto& v : row) v = 0.5;
  }
  const auto gated = ComputeCriticalDifference(flat, 0.1);
  CHECK(gated.gated);
  REQUIRE(gated.cliques.size() == 1);
  CHECK(gated.cliques[0].size() == 4);

  TaskResultMatrix holes = m;
  holes.values[1].pop_back();
  CHECK_THROWS_AS(ComputeCriticalDifference(holes), DataError);
}

TEST_CASE("roc and pr curves") {
  const std::vector<double> s{0.9, 0.8, 0.8, 0.3, 0.1};
  const std::vector<int> y{1, 0, 1, 0, 1};
  const auto roc = RocCurve(s, y);
  REQUIRE(roc.size() == 5);
  CHECK(roc.front().x == 0.0);
  CHECK(roc.back().x == 1.0);
  CHECK(roc.back().y == 1.0);
  // Trapezoid area under the ROC points equals the rank AUC.
  double area = 0;
  for (std::size_t i = 1; i < roc.size(); ++i) area += (roc[i].x - roc[i - 1].x) * (roc[i].y + roc[i - 1].y) / 2;
  CHECK(area == doctest::Approx(RocAuc(s, y)).epsilon(1e-12));
  const auto pr = PrCurve(s, y);
  for (std::size_t i = 1; i < pr.size(); ++i) CHECK(pr[i].x >= pr[i - 1].x);
  CHECK(pr[1].x == doctest::Approx(2.0 / 3.0));
  CHECK(pr[1].y == doctest::Approx(2.0 / 3.0));
}
