#include "flusense/stats/tests.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "flusense/common/errors.hpp"
#include "flusense/stats/metrics.hpp"

namespace flusense::stats {

double NormalSf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

double ChiSquaredSf(double x, double dof) {
  if (!(dof > 0)) throw DataError("chi-squared needs positive degrees of freedom");
  if (x <= 0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

namespace {

struct Components {
  double auc = 0.0;
  std::vector<double> v10;  // per positive
  std::vector<double> v01;  // per negative
};

Components Structural(std::span<const double> s, std::span<const int> labels) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < s.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(s[i]);
  const auto all_ranks = MidRanks(s);
  const auto pos_ranks = MidRanks(pos);
  const auto neg_ranks = MidRanks(neg);
  const double m = static_cast<double>(pos.size()), n = static_cast<double>(neg.size());
  Components c;
  std::size_t ip = 0, in = 0;
  double rank_sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (labels[i] == 1) {
      rank_sum += all_ranks[i];
      c.v10.push_back((all_ranks[i] - pos_ranks[ip++]) / n);
    } else {
      c.v01.push_back(1.0 - (all_ranks[i] - neg_ranks[in++]) / m);
    }
  }
  c.auc = (rank_sum - m * (m + 1) / 2) / (m * n);
  return c;
}

// Sample covariance (n - 1 denominator); zero for a single observation.
double Covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  if (n < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double s = 0;
  for (std::size_t i = 0; i < n; ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(n - 1);
}

}  // namespace

DelongResult DelongTest(std::span<const double> a, std::span<const double> b,
                        std::span<const int> labels) {
  if (a.size() != b.size() || a.size() != labels.size()) {
    throw DimensionError("DeLong test needs paired scores");
  }
  // RocAuc validates labels and class presence.
  RocAuc(a, labels);
  const auto ca = Structural(a, labels);
  const auto cb = Structural(b, labels);
  const double m = static_cast<double>(ca.v10.size()), n = static_cast<double>(ca.v01.size());
  const double s10 = Covariance(ca.v10, ca.v10) + Covariance(cb.v10, cb.v10) - 2 * Covariance(ca.v10, cb.v10);
  const double s01 = Covariance(ca.v01, ca.v01) + Covariance(cb.v01, cb.v01) - 2 * Covariance(ca.v01, cb.v01);
  DelongResult r;
  r.auc_a = ca.auc;
  r.auc_b = cb.auc;
  r.variance = std::max(0.0, s10 / m + s01 / n);
  const double diff = r.auc_a - r.auc_b;
  if (r.variance <= 0.0) {
    r.z = diff == 0.0 ? 0.0 : std::copysign(INFINITY, diff);
    r.p = diff == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.z = diff / std::sqrt(r.variance);
  r.p = std::min(1.0, 2.0 * NormalSf(std::abs(r.z)));
  return r;
}

MannWhitneyResult MannWhitneyU(std::span<const double> x, std::span<const double> y,
                               Alternative alternative) {
  if (x.empty() || y.empty()) throw DataError("Mann-Whitney U needs two nonempty samples");
  const std::size_t nx = x.size(), ny = y.size(), total = nx + ny;
  std::vector<double> pooled(x.begin(), x.end());
  pooled.insert(pooled.end(), y.begin(), y.end());
  const auto ranks = MidRanks(pooled);
  const double n1 = static_cast<double>(nx), n2 = static_cast<double>(ny);
  double rank_sum = 0;
  for (std::size_t i = 0; i < nx; ++i) rank_sum += ranks[i];

  MannWhitneyResult r;
  r.u = rank_sum - n1 * (n1 + 1) / 2;
  const double mu = n1 * n2 / 2;
  constexpr double kEps = 1e-9;

  if (total <= 12) {
    r.exact = true;
    double hits = 0, count = 0;
    for (std::uint32_t mask = 0; mask < (1u << total); ++mask) {
      if (static_cast<std::size_t>(std::popcount(mask)) != nx) continue;
      double s = 0;
      for (std::size_t i = 0; i < total; ++i) {
        if (mask & (1u << i)) s += ranks[i];
      }
      const double u = s - n1 * (n1 + 1) / 2;
      bool extreme = false;
      switch (alternative) {
        case Alternative::kTwoSided: extreme = std::abs(u - mu) >= std::abs(r.u - mu) - kEps; break;
        case Alternative::kGreater: extreme = u >= r.u - kEps; break;
        case Alternative::kLess: extreme = u <= r.u + kEps; break;
      }
      hits += extreme;
      count += 1;
    }
    r.p = hits / count;
    return r;
  }

  double tie_sum = 0;
  {
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < total;) {
      std::size_t j = i + 1;
      while (j < total && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_sum += t * t * t - t;
      i = j;
    }
  }
  const double nn = static_cast<double>(total);
  const double var = n1 * n2 / 12.0 * ((nn + 1) - tie_sum / (nn * (nn - 1)));
  if (var <= 0) {
    r.p = 1.0;
    return r;
  }
  const double sd = std::sqrt(var);
  switch (alternative) {
    case Alternative::kTwoSided:
      r.p = std::min(1.0, 2.0 * NormalSf(std::max(0.0, std::abs(r.u - mu) - 0.5) / sd));
      break;
    case Alternative::kGreater: r.p = NormalSf((r.u - mu - 0.5) / sd); break;
    case Alternative::kLess: r.p = NormalSf((mu - r.u - 0.5) / sd); break;
  }
  return r;
}

WilcoxonResult WilcoxonSignedRank(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("Wilcoxon test needs paired samples");
  std::vector<double> diffs;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    if (d != 0.0) diffs.push_back(d);
  }
  if (diffs.empty()) throw DataError("Wilcoxon test: every difference is zero");
  std::vector<double> magnitude(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) magnitude[i] = std::abs(diffs[i]);
  const auto ranks = MidRanks(magnitude);

  WilcoxonResult r;
  r.n = static_cast<int>(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) (diffs[i] > 0 ? r.w_plus : r.w_minus) += ranks[i];
  r.w = std::min(r.w_plus, r.w_minus);

  if (r.n <= 20) {
    // Midranks are multiples of one half, so doubled ranks are integers.
    r.exact = true;
    std::vector<int> doubled(ranks.size());
    int total = 0;
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      doubled[i] = static_cast<int>(std::lround(2 * ranks[i]));
      total += doubled[i];
    }
    std::vector<double> ways(total + 1, 0.0);
    ways[0] = 1.0;
    for (int d : doubled) {
      for (int s = total; s >= d; --s) ways[s] += ways[s - d];
    }
    const int limit = static_cast<int>(std::lround(2 * r.w));
    double tail = 0;
    for (int s = 0; s <= limit; ++s) tail += ways[s];
    r.p = std::min(1.0, 2.0 * tail / std::ldexp(1.0, r.n));
    return r;
  }

  const double n = r.n;
  double tie_sum = 0;
  {
    std::vector<double> sorted = magnitude;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i + 1;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie_sum += t * t * t - t;
      i = j;
    }
  }
  const double mu = n * (n + 1) / 4;
  const double var = n * (n + 1) * (2 * n + 1) / 24 - tie_sum / 48;
  r.p = std::min(1.0, 2.0 * NormalSf((mu - r.w) / std::sqrt(var)));
  return r;
}

FriedmanResult FriedmanTest(const std::vector<std::vector<double>>& values) {
  const std::size_t k = values.size();
  if (k < 3) throw DataError("Friedman test needs at least 3 models");
  const std::size_t n = values[0].size();
  if (n < 2) throw DataError("Friedman test needs at least 2 tasks");
  for (const auto& row : values) {
    if (row.size() != n) throw DataError("Friedman test needs a complete grid");
    for (double v : row) {
      if (!std::isfinite(v)) throw DataError("Friedman test: non-finite value");
    }
  }
  FriedmanResult r;
  r.average_ranks.assign(k, 0.0);
  std::vector<double> column(k);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < k; ++j) column[j] = -values[j][t];
    const auto ranks = MidRanks(column);
    for (std::size_t j = 0; j < k; ++j) r.average_ranks[j] += ranks[j] / static_cast<double>(n);
  }
  const double kk = static_cast<double>(k), nn = static_cast<double>(n);
  double s = 0;
  for (double rank : r.average_ranks) s += (rank - (kk + 1) / 2) * (rank - (kk + 1) / 2);
  r.chi2 = 12 * nn / (kk * (kk + 1)) * s;
  r.p = ChiSquaredSf(r.chi2, kk - 1);
  return r;
}

std::vector<double> HolmAdjust(std::span<const double> p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> out(m);
  double running = 0;
  for (std::size_t i = 0; i < m; ++i) {
    running = std::max(running, std::min(1.0, static_cast<double>(m - i) * p[idx[i]]));
    out[idx[i]] = running;
  }
  return out;
}

}  // namespace flusense::stats
