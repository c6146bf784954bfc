#include "d4d/tensor.hpp"

#include <cmath>
#include <sstream>

namespace d4d {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

static void check_shape(const std::vector<std::size_t>& shape) {
  if (shape.empty()) throw Error("tensor shape must have rank >= 1");
  for (std::size_t e : shape) {
    if (e == 0) throw Error("tensor extents must be >= 1, got " + shape_to_string(shape));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  check_shape(shape);
  Tensor t;
  t.data.assign(shape_numel(shape), 0.0);
  t.shape = std::move(shape);
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t = zeros(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  check_shape(shape);
  if (shape_numel(shape) != values.size()) {
    throw Error("tensor data length " + std::to_string(values.size()) +
                " does not match shape " + shape_to_string(shape));
  }
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

std::size_t Tensor::row_size() const {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data) v = value;
}

Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> shape = src.shape;
  shape[0] = idx.size();
  Tensor out = Tensor::zeros(shape);
  const std::size_t row = src.row_size();
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double* from = src.data.data() + idx[k] * row;
    double* to = out.data.data() + k * row;
    for (std::size_t j = 0; j < row; ++j) to[j] = from[j];
  }
  return out;
}

}  // namespace d4d
