#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "d4d/stats.hpp"
#include "d4d/train.hpp"

namespace d4d {

// Per-layer slice of an epoch snapshot. Weight statistics cover the layer's
// weight-family tensors (kernels, recurrent kernels, gains), bias statistics
// its bias-family tensors; gradient statistics, norms, VG and TL come from
// the epoch-mean gradients of the weight family. Layers without parameters
// carry all-zero blocks; DN/SA still reflect their activations.
struct LayerEpochStats {
  StatVector weights, grads, biases;
  double weight_norm = 0, grad_norm = 0;
  double vanishing_gradient = 0;
  double dead_node_frac = 0;
  double saturation_frac = 0;
  double tune_learning = 0;
};

// Raw per-epoch capture; non-finite values pass through untouched and are
// only replaced when the feature matrix is assembled.
struct EpochSnapshot {
  int epoch = 0;
  double loss = 0, accuracy = 0;
  double data_min = 0, data_max = 0;  // constant across a run
  std::vector<LayerEpochStats> layers;
  bool nonfinite_update = false;
};

struct ProbeConfig {
  double dead_threshold = 1e-3;
  double sigmoid_sat_min = 0.05, sigmoid_sat_max = 0.95;
  double tanh_sat_min = -0.95, tanh_sat_max = 0.95;
};

// Training observer that accumulates per-batch raw material (effective
// gradients, pooled activations) and emits one EpochSnapshot per epoch.
class Instrument : public TrainObserver {
 public:
  using SnapshotHook = std::function<void(const EpochSnapshot&)>;

  Instrument(ProbeConfig cfg, double data_min, double data_max, SnapshotHook hook = nullptr);

  void on_epoch_start(int epoch, Network& net) override;
  void on_batch_end(int epoch, int batch, Network& net, const Tensor& batch_targets,
                    double batch_loss, std::size_t batch_correct, std::size_t batch_rows,
                    bool nonfinite_update) override;
  void on_epoch_end(int epoch, Network& net, double loss, double accuracy,
                    bool nonfinite_update) override;

  const std::vector<EpochSnapshot>& snapshots() const { return snaps_; }

 private:
  ProbeConfig cfg_;
  double data_min_, data_max_;
  SnapshotHook hook_;
  std::vector<EpochSnapshot> snaps_;

  std::size_t batches_ = 0;
  std::vector<std::vector<double>> grad_sum_;     // per layer, flattened weight-family grads
  std::vector<std::vector<double>> unit_max_;     // per layer, per unit max |activation|
  std::vector<std::pair<std::size_t, std::size_t>> sat_;  // per layer (outside, total)
};

// Assembles one snapshot from already-aggregated epoch material.
EpochSnapshot snapshot_epoch(const Network& net,
                             const std::vector<std::vector<double>>& mean_weight_grads,
                             const std::vector<std::vector<double>>& unit_max_abs,
                             const std::vector<std::pair<std::size_t, std::size_t>>& sat_counts,
                             int epoch, double loss, double accuracy, double data_min,
                             double data_max, bool nonfinite_update, const ProbeConfig& cfg);

// Min/max over a dataset's input tensors (the DR feature).
std::pair<double, double> dataset_range(const Dataset& data);

}  // namespace d4d
