#pragma once

#include <memory>
#include <vector>

#include "d4d/layers.hpp"
#include "d4d/model_spec.hpp"
#include "d4d/rng.hpp"

namespace d4d {

// A built model: layers wired by name in topological (list) order, with
// parameters initialized from a deterministic stream derived from `seed`.
// Single-threaded, exclusively owned; independent Networks never share state.
class Network {
 public:
  Network(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::uint64_t init_seed() const { return seed_; }
  std::size_t layer_count() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }

  // Runs every layer and caches all post-activation outputs (the probes
  // read them). `rng_node` seeds dropout masks; reusing a node reproduces
  // them. Rejects non-finite input values.
  const std::vector<Tensor>& forward(const std::vector<Tensor>& inputs, bool training,
                                     const Rng& rng_node);

  const std::vector<Tensor>& activations() const { return acts_; }
  const Tensor& output() const { return acts_.back(); }

  // Accumulates parameter gradients from the given loss gradient at the
  // final output. Requires a preceding forward on the same batch.
  void backward(const Tensor& dloss_dout);

  void zero_grads();
  std::vector<ParamBlock*> trainable_params();
  // Every block including non-trainable buffers, in layer order (checkpoints).
  std::vector<ParamBlock*> all_param_blocks();
  std::vector<const ParamBlock*> all_param_blocks() const;

 private:
  ModelSpec spec_;
  std::uint64_t seed_;
  std::vector<std::unique_ptr<Layer>> layers_;
  // producers_[i][k]: >= 0 -> layer index, < 0 -> graph input (-1 - idx)
  std::vector<std::vector<int>> producers_;
  std::vector<Tensor> acts_;
  std::vector<Tensor> graph_inputs_;
};

// Convenience: spec'd single training step building blocks live in train.hpp.
Network build_model(const ModelSpec& spec, std::uint64_t seed);

}  // namespace d4d
