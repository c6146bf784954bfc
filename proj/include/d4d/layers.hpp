#pragma once

#include <memory>
#include <string>
#include <vector>

#include "d4d/model_spec.hpp"
#include "d4d/rng.hpp"
#include "d4d/tensor.hpp"

namespace d4d {

// One trainable tensor (or non-trainable buffer) owned by a layer.
// `bias_like` separates the bias family from the weight family for the
// per-layer statistics probes.
struct ParamBlock {
  std::string tag;
  bool bias_like = false;
  bool trainable = true;
  Tensor value;
  Tensor grad;
};

// Batch-major layer. Tensors passed to forward/backward carry the batch as
// dim 0; shape bookkeeping here is per-sample. Layers cache whatever they
// need for the following backward call.
class Layer {
 public:
  virtual ~Layer() = default;

  const LayerSpec& spec() const { return spec_; }
  const std::string& name() const { return spec_.name; }
  const std::vector<std::size_t>& out_shape() const { return out_shape_; }

  std::vector<ParamBlock>& params() { return params_; }
  const std::vector<ParamBlock>& params() const { return params_; }

  virtual void init_params(RngStream& /*rng*/) {}

  // `dropout_rng` is only consulted by stochastic layers and only when
  // training; passing the same stream reproduces the same masks.
  virtual Tensor forward(const std::vector<const Tensor*>& in, bool training,
                         RngStream* dropout_rng) = 0;

  // Gradients of the loss w.r.t. each forward input, in order. Parameter
  // gradients are accumulated (+=) into the param blocks.
  virtual std::vector<Tensor> backward(const Tensor& dout) = 0;

  // BatchNorm only: pin the normalization statistics (both modes use them).
  virtual bool supports_frozen_stats() const { return false; }
  virtual void freeze_statistics(const std::vector<double>& /*mean*/,
                                 const std::vector<double>& /*var*/) {}
  virtual void set_stats_frozen(bool /*frozen*/) {}

  void zero_grads();

 protected:
  Layer(LayerSpec spec, std::vector<std::vector<std::size_t>> in_shapes)
      : spec_(std::move(spec)), in_shapes_(std::move(in_shapes)) {}

  ParamBlock& add_param(std::string tag, std::vector<std::size_t> shape, bool bias_like,
                        bool trainable = true);
  void require_inputs(std::size_t n) const;

  LayerSpec spec_;
  std::vector<std::vector<std::size_t>> in_shapes_;
  std::vector<std::size_t> out_shape_;
  std::vector<ParamBlock> params_;
};

// Factory; throws Error describing the shape problem for the offending layer.
std::unique_ptr<Layer> make_layer(LayerSpec spec,
                                  std::vector<std::vector<std::size_t>> in_shapes);

// Element-wise (or row-wise softmax) activation, in place over the last axis.
void apply_activation(ActivationKind a, Tensor& x);
// Chain rule through an activation given its *post*-activation values.
Tensor activation_backward(ActivationKind a, const Tensor& post, const Tensor& dout);

// Is this a bounded activation the saturation probe applies to?
bool is_bounded_activation(ActivationKind a);

// C[r,u] += A[r,f] * B[f,u]
void matmul_acc(const double* a, const double* b, double* c, std::size_t rows, std::size_t inner,
                std::size_t cols);

}  // namespace d4d
