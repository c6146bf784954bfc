#include "d4d/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "d4d/error.hpp"

namespace d4d {

StatVector descriptive_stats(std::span<const double> v) {
  const std::size_t n = v.size();
  if (n == 0) throw Error("descriptive_stats: empty input");

  for (double x : v) {
    if (std::isnan(x)) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      return {nan, nan, nan, nan, nan, nan, nan, nan};
    }
  }

  bool constant = true;
  for (double x : v) {
    if (x != v[0]) {
      constant = false;
      break;
    }
  }
  if (constant) {
    StatVector s;
    s.mean = s.min = s.max = s.median = v[0];
    return s;
  }

  StatVector s;
  double sum = 0.0;
  s.min = v[0];
  s.max = v[0];
  for (double x : v) {
    sum += x;
    if (x < s.min) s.min = x;
    if (x > s.max) s.max = x;
  }
  s.mean = sum / static_cast<double>(n);

  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end());
  s.median = n % 2 == 1 ? sorted[n / 2] : (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0;

  double ss = 0.0, sc = 0.0;
  for (double x : v) {
    const double d = x - s.mean;
    ss += d * d;
    sc += d * d * d;
  }
  const double m2 = ss / static_cast<double>(n);
  const double m3 = sc / static_cast<double>(n);
  s.variance = m2;
  s.std_dev = std::sqrt(m2);
  s.sem = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) / std::sqrt(static_cast<double>(n))
                : 0.0;
  s.skew = m2 == 0.0 ? 0.0 : m3 / std::pow(m2, 1.5);
  return s;
}

double tensor_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double vanishing_gradient_metric(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += std::fabs(x);
  return s / static_cast<double>(v.size());
}

double dead_node_fraction(std::span<const double> unit_max_abs, double threshold) {
  if (unit_max_abs.empty()) return 0.0;
  std::size_t dead = 0;
  for (double m : unit_max_abs) {
    if (m < threshold) ++dead;
  }
  return static_cast<double>(dead) / static_cast<double>(unit_max_abs.size());
}

double saturation_fraction(std::span<const double> values, double min_thr, double max_thr) {
  if (values.empty()) return 0.0;
  std::size_t outside = 0;
  for (double x : values) {
    if (x < min_thr || x > max_thr) ++outside;
  }
  return static_cast<double>(outside) / static_cast<double>(values.size());
}

double tune_learning_ratio(double grad_norm, double weight_norm) {
  if (weight_norm == 0.0) return 0.0;
  return grad_norm / weight_norm;
}

}  // namespace d4d
