#pragma once

#include "d4d/model_spec.hpp"
#include "d4d/tensor.hpp"

namespace d4d {

// Losses treat every axis before the last as rows. mse/bce average over all
// elements; categorical cross-entropy averages over rows (so a [N,K,C]
// prediction averages across the K sequence steps as well as the batch).
double loss_value(LossKind kind, const Tensor& pred, const Tensor& target);
Tensor loss_grad(LossKind kind, const Tensor& pred, const Tensor& target);

// Classification accuracy: argmax match over the last axis when it has two
// or more entries, 0.5-threshold match otherwise.
std::size_t correct_count(const Tensor& pred, const Tensor& target);
double accuracy(const Tensor& pred, const Tensor& target);

}  // namespace d4d
