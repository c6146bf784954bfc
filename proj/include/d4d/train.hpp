#pragma once

#include <functional>
#include <vector>

#include "d4d/network.hpp"
#include "d4d/tensor.hpp"

namespace d4d {

// Batch-major supervised dataset. `inputs` holds one tensor per graph input.
struct Dataset {
  std::vector<Tensor> inputs;
  Tensor targets;

  std::size_t size() const { return inputs.empty() ? 0 : inputs[0].shape[0]; }
};

// Hooks into the training loop; the probe module's Instrument builds epoch
// snapshots from these. Callbacks run synchronously inside the training job.
class TrainObserver {
 public:
  virtual ~TrainObserver() = default;
  virtual void on_epoch_start(int /*epoch*/, Network& /*net*/) {}
  // net.output() holds the just-computed batch output (training mode).
  virtual void on_batch_end(int /*epoch*/, int /*batch*/, Network& /*net*/,
                            const Tensor& /*batch_targets*/, double /*batch_loss*/,
                            std::size_t /*batch_correct*/, std::size_t /*batch_rows*/,
                            bool /*nonfinite_update*/) {}
  virtual void on_epoch_end(int /*epoch*/, Network& /*net*/, double /*loss*/,
                            double /*accuracy*/, bool /*nonfinite_update*/) {}
};

struct TrainHistory {
  std::vector<double> loss;
  std::vector<double> accuracy;
};

// Minibatch training. Batch order is a pure function of (cfg.seed, epoch);
// a NaN loss never aborts the run. The observer's epoch callback fires
// exactly cfg.epochs times.
TrainHistory train(Network& net, const Dataset& data, const TrainConfig& cfg,
                   TrainObserver* observer = nullptr);

// Forward in inference mode over a whole dataset.
Tensor predict(Network& net, const std::vector<Tensor>& inputs);

}  // namespace d4d
