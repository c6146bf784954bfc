#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "d4d/error.hpp"

namespace d4d {

// Dense row-major tensor of 64-bit floats. Rank >= 1, every extent >= 1.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // Number of elements per leading-axis row, i.e. numel of shape[1:].
  std::size_t row_size() const;
  // Number of elements per trailing axis, i.e. shape.back().
  std::size_t last_extent() const { return shape.back(); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;

  void fill(double value);
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_to_string(const std::vector<std::size_t>& shape);

// Gathers rows (leading axis) into a new tensor: out row k = src row idx[k].
Tensor gather_rows(const Tensor& src, const std::vector<std::size_t>& idx);

}  // namespace d4d
