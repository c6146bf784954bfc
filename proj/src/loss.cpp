#include "d4d/loss.hpp"

#include <cmath>

#include "d4d/error.hpp"

namespace d4d {

namespace {
constexpr double kProbFloor = 1e-12;

void check_shapes(const Tensor& pred, const Tensor& target) {
  if (!pred.same_shape(target))
    throw Error("loss: prediction shape " + shape_to_string(pred.shape) +
                " does not match target shape " + shape_to_string(target.shape));
}
}  // namespace

double loss_value(LossKind kind, const Tensor& pred, const Tensor& target) {
  check_shapes(pred, target);
  const std::size_t n = pred.numel();
  switch (kind) {
    case LossKind::Mse: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
      }
      return s / static_cast<double>(n);
    }
    case LossKind::CategoricalCrossentropy: {
      const std::size_t c = pred.last_extent();
      const std::size_t rows = n / c;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (target[i] != 0.0) {
          const double p = pred[i] > kProbFloor ? pred[i] : kProbFloor;
          s -= target[i] * std::log(p);
        }
      }
      return s / static_cast<double>(rows);
    }
    case LossKind::BinaryCrossentropy: {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double p = pred[i];
        if (!(p > kProbFloor)) p = kProbFloor;
        if (!(p < 1.0 - kProbFloor)) p = 1.0 - kProbFloor;
        s -= target[i] * std::log(p) + (1.0 - target[i]) * std::log(1.0 - p);
      }
      return s / static_cast<double>(n);
    }
  }
  throw Error("unknown loss kind");
}

Tensor loss_grad(LossKind kind, const Tensor& pred, const Tensor& target) {
  check_shapes(pred, target);
  const std::size_t n = pred.numel();
  Tensor g = Tensor::zeros(pred.shape);
  switch (kind) {
    case LossKind::Mse: {
      const double scale = 2.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) g[i] = scale * (pred[i] - target[i]);
      return g;
    }
    case LossKind::CategoricalCrossentropy: {
      const std::size_t c = pred.last_extent();
      const double rows = static_cast<double>(n / c);
      for (std::size_t i = 0; i < n; ++i) {
        if (target[i] != 0.0) {
          const double p = pred[i] > kProbFloor ? pred[i] : kProbFloor;
          g[i] = -target[i] / p / rows;
        }
      }
      return g;
    }
    case LossKind::BinaryCrossentropy: {
      const double scale = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        double p = pred[i];
        if (!(p > kProbFloor)) p = kProbFloor;
        if (!(p < 1.0 - kProbFloor)) p = 1.0 - kProbFloor;
        g[i] = scale * (-target[i] / p + (1.0 - target[i]) / (1.0 - p));
      }
      return g;
    }
  }
  throw Error("unknown loss kind");
}

std::size_t correct_count(const Tensor& pred, const Tensor& target) {
  check_shapes(pred, target);
  const std::size_t c = pred.last_extent();
  const std::size_t rows = pred.numel() / c;
  std::size_t correct = 0;
  if (c == 1) {
    for (std::size_t r = 0; r < rows; ++r) {
      if ((pred[r] > 0.5) == (target[r] > 0.5)) ++correct;
    }
    return correct;
  }
  for (std::size_t r = 0; r < rows; ++r) {
    const double* p = pred.data.data() + r * c;
    const double* t = target.data.data() + r * c;
    std::size_t pi = 0, ti = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (p[j] > p[pi]) pi = j;
      if (t[j] > t[ti]) ti = j;
    }
    if (pi == ti) ++correct;
  }
  return correct;
}

double accuracy(const Tensor& pred, const Tensor& target) {
  const std::size_t rows = pred.numel() / pred.last_extent();
  return static_cast<double>(correct_count(pred, target)) / static_cast<double>(rows);
}

}  // namespace d4d
