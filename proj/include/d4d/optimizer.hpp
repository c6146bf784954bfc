#pragma once

#include <memory>
#include <vector>

#include "d4d/layers.hpp"
#include "d4d/model_spec.hpp"

namespace d4d {

// SGD (with momentum) and Adam. When a clip value is configured, gradients
// are clipped element-wise in place before the update, so observers read the
// effective gradients. A non-finite update is not an error; step() reports
// it so the epoch snapshot can flag the run.
class Optimizer {
 public:
  static std::unique_ptr<Optimizer> make(const TrainConfig& cfg);
  virtual ~Optimizer() = default;

  // Returns false when any updated parameter is non-finite.
  bool step(const std::vector<ParamBlock*>& params);

 protected:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  virtual void update(std::size_t slot, Tensor& value, const Tensor& grad) = 0;
  TrainConfig cfg_;
};

}  // namespace d4d
