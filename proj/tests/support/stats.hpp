#pragma once

#include <span>
#include <vector>

namespace difflab::testing {

// Regularized incomplete gamma functions (series + continued fraction).
double gammp(double a, double x);
double gammq(double a, double x);

// Upper-tail p-value of a chi-square statistic.
double chi_square_pvalue(double stat, int dof);

// Pearson statistic for observed counts against expected probabilities;
// bins with expected probability 0 must have 0 observations.
double chi_square_stat(std::span<const double> observed_counts,
                       std::span<const double> expected_probs, double total);

struct MeanVar {
  double mean;
  double variance;  // unbiased
};

MeanVar mean_variance(std::span<const double> values);

}  // namespace difflab::testing
