#pragma once

#include <string>

#include "d4d/feature_matrix.hpp"

namespace d4d {

// Shortest decimal representation that round-trips the exact double.
std::string format_double(double v);

// One trace file per run: header row with every column name, then T data
// rows of round-trip formatted values.
void write_trace_csv(const std::string& path, const FeatureMatrix& fm, int l_max);
FeatureMatrix read_trace_csv(const std::string& path);

}  // namespace d4d
