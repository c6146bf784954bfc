#include "d4d/model_spec.hpp"

#include <cstdio>

#include "d4d/error.hpp"

namespace d4d {

std::string layer_kind_slug(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv";
    case LayerKind::MaxPool2D: return "maxpool";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Embedding: return "embedding";
    case LayerKind::Lstm: return "lstm";
    case LayerKind::Concatenate: return "concat";
    case LayerKind::RepeatVector: return "repeat";
    case LayerKind::TimeDistributedDense: return "tddense";
    case LayerKind::Activation: return "act";
  }
  throw Error("unknown layer kind");
}

std::string activation_name(ActivationKind a) {
  switch (a) {
    case ActivationKind::None: return "none";
    case ActivationKind::Linear: return "linear";
    case ActivationKind::Relu: return "relu";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Tanh: return "tanh";
    case ActivationKind::Softmax: return "softmax";
  }
  throw Error("unknown activation");
}

ActivationKind activation_from_name(const std::string& s) {
  if (s == "none") return ActivationKind::None;
  if (s == "linear") return ActivationKind::Linear;
  if (s == "relu") return ActivationKind::Relu;
  if (s == "sigmoid") return ActivationKind::Sigmoid;
  if (s == "tanh") return ActivationKind::Tanh;
  if (s == "softmax") return ActivationKind::Softmax;
  throw Error("unknown activation name: " + s);
}

std::string init_to_string(const Init& init) {
  switch (init.kind) {
    case InitKind::GlorotUniform: return "glorot_uniform";
    case InitKind::HeUniform: return "he_uniform";
    case InitKind::Zeros: return "zeros";
    case InitKind::Normal: {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "normal(%.17g)", init.stddev);
      return buf;
    }
  }
  throw Error("unknown init kind");
}

Init init_from_string(const std::string& s) {
  // stddev keeps its default for the named kinds so specs round-trip exactly
  if (s == "glorot_uniform") return Init{InitKind::GlorotUniform, Init{}.stddev};
  if (s == "he_uniform") return Init{InitKind::HeUniform, Init{}.stddev};
  if (s == "zeros") return Init{InitKind::Zeros, Init{}.stddev};
  if (s.rfind("normal(", 0) == 0 && s.back() == ')') {
    Init init;
    init.kind = InitKind::Normal;
    init.stddev = std::stod(s.substr(7, s.size() - 8));
    if (!(init.stddev > 0)) throw Error("normal initializer needs stddev > 0: " + s);
    return init;
  }
  throw Error("unknown initializer: " + s);
}

std::string loss_name(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::CategoricalCrossentropy: return "categorical_crossentropy";
    case LossKind::BinaryCrossentropy: return "binary_crossentropy";
  }
  throw Error("unknown loss kind");
}

LossKind loss_from_name(const std::string& s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "categorical_crossentropy") return LossKind::CategoricalCrossentropy;
  if (s == "binary_crossentropy") return LossKind::BinaryCrossentropy;
  throw Error("unknown loss name: " + s);
}

std::string optimizer_name(OptimizerKind k) {
  return k == OptimizerKind::Sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_name(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw Error("unknown optimizer name: " + s);
}

std::string default_layer_name(LayerKind kind, std::size_t index) {
  return layer_kind_slug(kind) + "_" + std::to_string(index);
}

void validate_spec_fields(const ModelSpec& spec) {
  if (spec.inputs.empty()) throw Error("model spec needs at least one input");
  for (const auto& in : spec.inputs) {
    if (in.shape.empty()) throw Error("input '" + in.name + "' needs rank >= 1");
    for (std::size_t e : in.shape) {
      if (e == 0) throw Error("input '" + in.name + "' has zero extent");
    }
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + layer_kind_slug(l.kind) + ")";
    switch (l.kind) {
      case LayerKind::Dense:
      case LayerKind::TimeDistributedDense:
        if (l.units < 1) throw Error(where + ": units must be >= 1");
        break;
      case LayerKind::Lstm:
        if (l.units < 1) throw Error(where + ": units must be >= 1");
        break;
      case LayerKind::Conv2D:
        if (l.filters < 1) throw Error(where + ": filters must be >= 1");
        if (l.kernel[0] < 1 || l.kernel[1] < 1) throw Error(where + ": kernel extents must be >= 1");
        break;
      case LayerKind::MaxPool2D:
        if (l.pool[0] < 1 || l.pool[1] < 1) throw Error(where + ": pool extents must be >= 1");
        break;
      case LayerKind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) throw Error(where + ": dropout rate must be in [0,1)");
        break;
      case LayerKind::Embedding:
        if (l.vocab_size < 1 || l.embed_dim < 1)
          throw Error(where + ": embedding needs vocab_size and embed_dim >= 1");
        break;
      case LayerKind::RepeatVector:
        if (l.repeat < 1) throw Error(where + ": repeat count must be >= 1");
        break;
      default:
        break;
    }
  }
}

void validate_train_config(const TrainConfig& cfg, std::size_t dataset_size) {
  if (cfg.epochs < 1) throw Error("epochs must be >= 1");
  if (cfg.batch_size < 1) throw Error("batch_size must be >= 1");
  if (dataset_size > 0 && static_cast<std::size_t>(cfg.batch_size) > dataset_size)
    throw Error("batch_size " + std::to_string(cfg.batch_size) + " exceeds dataset size " +
                std::to_string(dataset_size));
  if (!(cfg.learning_rate > 0)) throw Error("learning_rate must be > 0");
  if (cfg.gradient_clip && !(*cfg.gradient_clip > 0)) throw Error("gradient_clip must be > 0");
}

}  // namespace d4d
