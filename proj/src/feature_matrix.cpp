#include "d4d/feature_matrix.hpp"

#include <cmath>

#include "d4d/error.hpp"

namespace d4d {

std::vector<std::string> feature_column_names(int l_max) {
  std::vector<std::string> names = {"LS", "AC", "DR_min", "DR_max"};
  static const char* kStatSuffix[8] = {"M", "Mi", "Ma", "Me", "V", "S", "Se", "Sk"};
  for (int layer = 1; layer <= l_max; ++layer) {
    const std::string p = "L" + std::to_string(layer) + "_";
    for (const char* tensor : {"W", "G", "B"}) {
      for (const char* stat : kStatSuffix) {
        names.push_back(p + stat + "_" + tensor);
      }
    }
    names.push_back(p + "N_W");
    names.push_back(p + "N_G");
    names.push_back(p + "VG");
    names.push_back(p + "DN");
    names.push_back(p + "SA");
    names.push_back(p + "TL");
    names.push_back(p + "RSV1");
    names.push_back(p + "RSV2");
    names.push_back(p + "RSV3");
  }
  return names;
}

double sanitize_value(double v) {
  if (std::isnan(v)) return kNanSentinel;
  if (std::isinf(v)) return v > 0 ? kPosInfSentinel : kNegInfSentinel;
  return v;
}

namespace {

void write_stat_block(double* out, const StatVector& s) {
  out[0] = s.mean;
  out[1] = s.min;
  out[2] = s.max;
  out[3] = s.median;
  out[4] = s.variance;
  out[5] = s.std_dev;
  out[6] = s.sem;
  out[7] = s.skew;
}

}  // namespace

FeatureMatrix assemble_feature_matrix(const std::vector<EpochSnapshot>& snapshots, int T,
                                      int l_max) {
  if (snapshots.empty()) throw Error("assemble_feature_matrix: no snapshots");
  if (static_cast<int>(snapshots.size()) > T)
    throw Error("assemble_feature_matrix: " + std::to_string(snapshots.size()) +
                " snapshots exceed T=" + std::to_string(T) + "; raise T corpus-wide");
  for (const EpochSnapshot& s : snapshots) {
    if (static_cast<int>(s.layers.size()) > l_max)
      throw Error("assemble_feature_matrix: model has " + std::to_string(s.layers.size()) +
                  " layers, exceeding L_max=" + std::to_string(l_max) +
                  "; raise L_max corpus-wide");
  }

  FeatureMatrix fm;
  fm.rows = static_cast<std::size_t>(T);
  fm.cols = feature_columns(l_max);
  fm.values.assign(fm.rows * fm.cols, 0.0);

  for (std::size_t e = 0; e < snapshots.size(); ++e) {
    const EpochSnapshot& s = snapshots[e];
    double* row = fm.values.data() + e * fm.cols;
    row[0] = s.loss;
    row[1] = s.accuracy;
    row[2] = s.data_min;
    row[3] = s.data_max;
    for (std::size_t li = 0; li < s.layers.size(); ++li) {
      const LayerEpochStats& ls = s.layers[li];
      double* block = row + kGlobalColumns + li * kLayerBlockColumns;
      write_stat_block(block + 0, ls.weights);
      write_stat_block(block + 8, ls.grads);
      write_stat_block(block + 16, ls.biases);
      block[24] = ls.weight_norm;
      block[25] = ls.grad_norm;
      block[26] = ls.vanishing_gradient;
      block[27] = ls.dead_node_frac;
      block[28] = ls.saturation_frac;
      block[29] = ls.tune_learning;
      // columns 30..32 reserved, stay zero
    }
  }
  for (double& v : fm.values) v = sanitize_value(v);
  return fm;
}

}  // namespace d4d
