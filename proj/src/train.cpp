#include "d4d/train.hpp"

#include <cmath>

#include "d4d/error.hpp"
#include "d4d/loss.hpp"
#include "d4d/optimizer.hpp"

namespace d4d {

TrainHistory train(Network& net, const Dataset& data, const TrainConfig& cfg,
                   TrainObserver* observer) {
  const std::size_t n = data.size();
  if (n == 0) throw Error("train: empty dataset");
  validate_train_config(cfg, n);
  if (data.targets.shape.empty() || data.targets.shape[0] != n)
    throw Error("train: targets row count does not match inputs");

  auto opt = Optimizer::make(cfg);
  auto params = net.trainable_params();
  const Rng root(cfg.seed);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t steps = (n + bs - 1) / bs;

  TrainHistory hist;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (observer) observer->on_epoch_start(epoch, net);
    const auto perm =
        shuffled_indices(n, root.child("shuffle").child(static_cast<std::uint64_t>(epoch)).stream());
    double loss_sum = 0.0;
    std::size_t correct = 0, slots = 0;
    bool nonfinite = false;
    for (std::size_t b = 0; b < steps; ++b) {
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(n, lo + bs);
      std::vector<std::size_t> rows(perm.begin() + lo, perm.begin() + hi);
      std::vector<Tensor> xb;
      xb.reserve(data.inputs.size());
      for (const Tensor& t : data.inputs) xb.push_back(gather_rows(t, rows));
      Tensor yb = gather_rows(data.targets, rows);

      const Rng drop_node =
          root.child("batchrng").child(static_cast<std::uint64_t>(epoch)).child(b);
      net.forward(xb, /*training=*/true, drop_node);
      const Tensor& out = net.output();
      const double batch_loss = loss_value(cfg.loss, out, yb);
      const std::size_t batch_correct = correct_count(out, yb);
      Tensor g = loss_grad(cfg.loss, out, yb);
      net.zero_grads();
      net.backward(g);
      const bool ok = opt->step(params);
      if (!ok) nonfinite = true;
      loss_sum += batch_loss * static_cast<double>(rows.size());
      correct += batch_correct;
      // accuracy slots: one per argmax row (a [N,K,C] target has N*K of them)
      slots += yb.last_extent() >= 2 ? yb.numel() / yb.last_extent() : yb.numel();
      if (observer)
        observer->on_batch_end(epoch, static_cast<int>(b), net, yb, batch_loss, batch_correct,
                               rows.size(), !ok);
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    const double epoch_acc = static_cast<double>(correct) / static_cast<double>(slots);
    hist.loss.push_back(epoch_loss);
    hist.accuracy.push_back(epoch_acc);
    if (observer) observer->on_epoch_end(epoch, net, epoch_loss, epoch_acc, nonfinite);
  }
  return hist;
}

Tensor predict(Network& net, const std::vector<Tensor>& inputs) {
  net.forward(inputs, /*training=*/false, Rng(0));
  return net.output();
}

}  // namespace d4d
