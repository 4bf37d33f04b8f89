#pragma once

#include <span>
#include <vector>

namespace flusense::stats {

enum class Alternative { kTwoSided, kGreater, kLess };

// Standard normal upper tail.
double NormalSf(double z);
// Chi-squared upper tail with the given degrees of freedom.
double ChiSquaredSf(double x, double dof);

struct DelongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double variance = 0.0;  // of auc_a - auc_b
  double z = 0.0;
  double p = 1.0;  // two-sided
};

// Paired comparison of two ROC AUCs on the same examples using the
// structural-components covariance estimate.
DelongResult DelongTest(std::span<const double> a, std::span<const double> b,
                        std::span<const int> labels);

struct MannWhitneyResult {
  double u = 0.0;  // pairs with x > y, ties counted as one half
  double p = 1.0;
  bool exact = false;
};

// Exact permutation distribution when n + m <= 12, otherwise the normal
// approximation with tie and continuity corrections. kGreater tests
// whether x tends to exceed y.
MannWhitneyResult MannWhitneyU(std::span<const double> x, std::span<const double> y,
                               Alternative alternative = Alternative::kTwoSided);

struct WilcoxonResult {
  double w = 0.0;  // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  int n = 0;  // nonzero differences
  double p = 1.0;  // two-sided
  bool exact = false;
};

// Zero differences are dropped before ranking. Exact null distribution for
// n <= 20, normal approximation with tie correction above. Throws
// DataError when every difference is zero.
WilcoxonResult WilcoxonSignedRank(std::span<const double> x, std::span<const double> y);

struct FriedmanResult {
  std::vector<double> average_ranks;  // rank 1 = best (highest value)
  double chi2 = 0.0;
  double p = 1.0;
};

// values[model][task]. Needs at least 3 models and 2 tasks.
FriedmanResult FriedmanTest(const std::vector<std::vector<double>>& values);

// Holm step-down adjusted p-values, same order as the input.
std::vector<double> HolmAdjust(std::span<const double> p);

}  // namespace flusense::stats
