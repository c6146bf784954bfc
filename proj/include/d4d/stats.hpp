#pragma once

#include <span>

namespace d4d {

// Descriptive statistics, pinned conventions:
//   variance/std: population (/n); sem: sample std (/(n-1)) over sqrt(n),
//   0 when n == 1; median: midpoint-interpolated order statistic;
//   skew: Fisher-Pearson m3/m2^(3/2) with population moments, 0 when m2 == 0.
// An exactly-constant input yields variance = std = sem = skew = 0; any NaN
// in the input makes every field NaN (sanitized downstream).
struct StatVector {
  double mean = 0, min = 0, max = 0, median = 0;
  double variance = 0, std_dev = 0, sem = 0, skew = 0;
};

StatVector descriptive_stats(std::span<const double> values);  // throws on empty

// Euclidean norm.
double tensor_norm(std::span<const double> values);

// Mean of absolute values.
double vanishing_gradient_metric(std::span<const double> values);

// Fraction of units whose epoch-max |activation| fell below the threshold.
double dead_node_fraction(std::span<const double> unit_max_abs, double threshold);

// Fraction of activation values below min_thr or above max_thr.
double saturation_fraction(std::span<const double> values, double min_thr, double max_thr);

// grad_norm / weight_norm, 0 when weight_norm == 0.
double tune_learning_ratio(double grad_norm, double weight_norm);

}  // namespace d4d
