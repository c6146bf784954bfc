#include "d4d/probe.hpp"

#include <cmath>
#include <limits>

namespace d4d {

namespace {

// Flattened weight-family parameter values (or grads) for one layer.
std::vector<double> weight_family(const Layer& layer, bool grads) {
  std::vector<double> out;
  for (const ParamBlock& p : layer.params()) {
    if (p.bias_like || !p.trainable) continue;
    const Tensor& t = grads ? p.grad : p.value;
    out.insert(out.end(), t.data.begin(), t.data.end());
  }
  return out;
}

std::vector<double> bias_family(const Layer& layer) {
  std::vector<double> out;
  for (const ParamBlock& p : layer.params()) {
    if (!p.bias_like || !p.trainable) continue;
    out.insert(out.end(), p.value.data.begin(), p.value.data.end());
  }
  return out;
}

}  // namespace

EpochSnapshot snapshot_epoch(const Network& net,
                             const std::vector<std::vector<double>>& mean_weight_grads,
                             const std::vector<std::vector<double>>& unit_max_abs,
                             const std::vector<std::pair<std::size_t, std::size_t>>& sat_counts,
                             int epoch, double loss, double accuracy, double data_min,
                             double data_max, bool nonfinite_update, const ProbeConfig& cfg) {
  EpochSnapshot snap;
  snap.epoch = epoch;
  snap.loss = loss;
  snap.accuracy = accuracy;
  snap.data_min = data_min;
  snap.data_max = data_max;
  snap.nonfinite_update = nonfinite_update;
  snap.layers.resize(net.layer_count());
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    LayerEpochStats& ls = snap.layers[i];
    const Layer& layer = net.layer(i);
    const std::vector<double> w = weight_family(layer, /*grads=*/false);
    const std::vector<double> b = bias_family(layer);
    if (!w.empty()) {
      ls.weights = descriptive_stats(w);
      ls.weight_norm = tensor_norm(w);
    }
    if (!b.empty()) ls.biases = descriptive_stats(b);
    if (i < mean_weight_grads.size() && !mean_weight_grads[i].empty()) {
      const std::vector<double>& g = mean_weight_grads[i];
      ls.grads = descriptive_stats(g);
      ls.grad_norm = tensor_norm(g);
      ls.vanishing_gradient = vanishing_gradient_metric(g);
      ls.tune_learning = tune_learning_ratio(ls.grad_norm, ls.weight_norm);
    }
    if (i < unit_max_abs.size() && !unit_max_abs[i].empty()) {
      ls.dead_node_frac = dead_node_fraction(unit_max_abs[i], cfg.dead_threshold);
    }
    if (i < sat_counts.size() && sat_counts[i].second > 0) {
      ls.saturation_frac = static_cast<double>(sat_counts[i].first) /
                           static_cast<double>(sat_counts[i].second);
    }
  }
  return snap;
}

Instrument::Instrument(ProbeConfig cfg, double data_min, double data_max, SnapshotHook hook)
    : cfg_(cfg), data_min_(data_min), data_max_(data_max), hook_(std::move(hook)) {}

void Instrument::on_epoch_start(int, Network& net) {
  batches_ = 0;
  grad_sum_.assign(net.layer_count(), {});
  unit_max_.assign(net.layer_count(), {});
  sat_.assign(net.layer_count(), {0, 0});
}

void Instrument::on_batch_end(int, int, Network& net, const Tensor&, double, std::size_t,
                              std::size_t, bool) {
  ++batches_;
  const std::vector<Tensor>& acts = net.activations();
  for (std::size_t i = 0; i < net.layer_count(); ++i) {
    Layer& layer = net.layer(i);
    // effective (post-clip) gradients of the weight family
    std::size_t off = 0;
    for (const ParamBlock& p : layer.params()) {
      if (p.bias_like || !p.trainable) continue;
      if (grad_sum_[i].size() < off + p.grad.numel()) grad_sum_[i].resize(off + p.grad.numel(), 0.0);
      for (std::size_t j = 0; j < p.grad.numel(); ++j) grad_sum_[i][off + j] += p.grad[j];
      off += p.grad.numel();
    }
    // pooled activations: per-unit max magnitude, unit = position in sample
    const Tensor& a = acts[i];
    const std::size_t unit_count = a.row_size();
    const std::size_t rows = a.shape[0];
    if (unit_max_[i].size() < unit_count) unit_max_[i].resize(unit_count, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* ar = a.data.data() + r * unit_count;
      for (std::size_t u = 0; u < unit_count; ++u) {
        const double m = std::fabs(ar[u]);
        if (m > unit_max_[i][u]) unit_max_[i][u] = m;
      }
    }
    // saturation counters for bounded activations
    const ActivationKind act = layer.spec().activation;
    if (is_bounded_activation(act)) {
      const double lo = act == ActivationKind::Sigmoid ? cfg_.sigmoid_sat_min : cfg_.tanh_sat_min;
      const double hi = act == ActivationKind::Sigmoid ? cfg_.sigmoid_sat_max : cfg_.tanh_sat_max;
      for (double v : a.data) {
        if (v < lo || v > hi) ++sat_[i].first;
      }
      sat_[i].second += a.numel();
    }
  }
}

void Instrument::on_epoch_end(int epoch, Network& net, double loss, double accuracy,
                              bool nonfinite_update) {
  std::vector<std::vector<double>> mean_grads = grad_sum_;
  if (batches_ > 0) {
    for (auto& layer_grads : mean_grads) {
      for (double& g : layer_grads) g /= static_cast<double>(batches_);
    }
  }
  EpochSnapshot snap = snapshot_epoch(net, mean_grads, unit_max_, sat_, epoch, loss, accuracy,
                                      data_min_, data_max_, nonfinite_update, cfg_);
  snaps_.push_back(snap);
  if (hook_) hook_(snaps_.back());
}

std::pair<double, double> dataset_range(const Dataset& data) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (const Tensor& t : data.inputs) {
    for (double v : t.data) {
      if (v < lo) lo = v;
      if (v > hi) hi = v;
    }
  }
  if (!(lo <= hi)) {
    lo = 0.0;
    hi = 0.0;
  }
  return {lo, hi};
}

}  // namespace d4d
