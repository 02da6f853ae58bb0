#pragma once

#include <span>
#include <vector>

namespace dtrwql {

/// Two-sided Wilcoxon rank-sum (Mann-Whitney) p-value. Uses exact
/// enumeration of the rank-sum null distribution when both samples have at
/// most 10 elements and the pooled sample is tie-free; otherwise the normal
/// approximation with mid-ranks, tie-corrected variance and continuity
/// correction. Returned p is in (0, 1].
double wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y);

/// P(chi^2_1 <= x).
double chi2_cdf_df1(double x);

/// Quantile of the chi-square distribution with 1 df, |error| < 1e-8.
double chi2_quantile_df1(double prob);

double normal_cdf(double z);

/// Linear-interpolation sample percentile (R type 7), p in [0, 1].
double percentile(std::vector<double> values, double p);

double mean(std::span<const double> v);
double sample_sd(std::span<const double> v);

}  // namespace dtrwql
