#include "d4d/trace_io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "d4d/error.hpp"

namespace d4d {

std::string format_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_trace_csv(const std::string& path, const FeatureMatrix& fm, int l_max) {
  const auto names = feature_column_names(l_max);
  if (names.size() != fm.cols)
    throw Error("write_trace_csv: matrix width " + std::to_string(fm.cols) +
                " does not match L_max=" + std::to_string(l_max));
  std::ofstream out(path);
  if (!out) throw Error("write_trace_csv: cannot open " + path);
  for (std::size_t c = 0; c < names.size(); ++c) {
    if (c) out << ',';
    out << names[c];
  }
  out << '\n';
  for (std::size_t r = 0; r < fm.rows; ++r) {
    for (std::size_t c = 0; c < fm.cols; ++c) {
      if (c) out << ',';
      out << format_double(fm.at(r, c));
    }
    out << '\n';
  }
  if (!out) throw Error("write_trace_csv: write failed for " + path);
}

FeatureMatrix read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("read_trace_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("read_trace_csv: empty file " + path);
  std::size_t cols = 1;
  for (char ch : line) {
    if (ch == ',') ++cols;
  }
  FeatureMatrix fm;
  fm.cols = cols;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t start = 0, seen = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        double v = 0.0;
        const char* b = line.data() + start;
        const char* e = line.data() + i;
        auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc() || res.ptr != e)
          throw Error("read_trace_csv: bad value in " + path + " row " +
                      std::to_string(fm.rows + 1));
        fm.values.push_back(v);
        ++seen;
        start = i + 1;
      }
    }
    if (seen != cols)
      throw Error("read_trace_csv: row " + std::to_string(fm.rows + 1) + " has " +
                  std::to_string(seen) + " values, expected " + std::to_string(cols) + " in " +
                  path);
    ++fm.rows;
  }
  return fm;
}

}  // namespace d4d
