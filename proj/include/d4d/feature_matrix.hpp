#pragma once

#include <string>
#include <vector>

#include "d4d/probe.hpp"

namespace d4d {

// Fixed-shape trace: T rows (epochs) by 4 + 33 * L_max columns. The four
// globals are [LS, AC, DR_min, DR_max]; each layer slot holds the three
// 8-wide statistic blocks (W, G, B), the two norms, VG, DN, SA, TL and three
// reserved always-zero columns. Missing layers and epochs are zero padding;
// sanitization replaces every non-finite entry last, so a matrix never
// contains NaN or infinities.
inline constexpr int kGlobalColumns = 4;
inline constexpr int kLayerBlockColumns = 33;
inline constexpr int kLayerLiveColumns = 30;

inline constexpr double kNanSentinel = -999999.0;
inline constexpr double kPosInfSentinel = 999999.0;
inline constexpr double kNegInfSentinel = -999998.0;

struct FeatureMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

inline std::size_t feature_columns(int l_max) {
  return kGlobalColumns + static_cast<std::size_t>(kLayerBlockColumns) * l_max;
}

std::vector<std::string> feature_column_names(int l_max);

double sanitize_value(double v);

FeatureMatrix assemble_feature_matrix(const std::vector<EpochSnapshot>& snapshots, int T,
                                      int l_max);

}  // namespace d4d
