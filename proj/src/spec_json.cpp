#include "d4d/spec_json.hpp"

#include "d4d/error.hpp"

using nlohmann::json;

namespace d4d {

namespace {

std::string kind_to_json_name(LayerKind k) {
  switch (k) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::MaxPool2D: return "maxpool2d";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Embedding: return "embedding";
    case LayerKind::Lstm: return "lstm";
    case LayerKind::Concatenate: return "concatenate";
    case LayerKind::RepeatVector: return "repeatvector";
    case LayerKind::TimeDistributedDense: return "timedistributeddense";
    case LayerKind::Activation: return "activation";
  }
  throw Error("unknown layer kind");
}

LayerKind kind_from_json_name(const std::string& s) {
  if (s == "dense") return LayerKind::Dense;
  if (s == "conv2d") return LayerKind::Conv2D;
  if (s == "maxpool2d") return LayerKind::MaxPool2D;
  if (s == "flatten") return LayerKind::Flatten;
  if (s == "dropout") return LayerKind::Dropout;
  if (s == "batchnorm") return LayerKind::BatchNorm;
  if (s == "embedding") return LayerKind::Embedding;
  if (s == "lstm") return LayerKind::Lstm;
  if (s == "concatenate") return LayerKind::Concatenate;
  if (s == "repeatvector") return LayerKind::RepeatVector;
  if (s == "timedistributeddense") return LayerKind::TimeDistributedDense;
  if (s == "activation") return LayerKind::Activation;
  throw Error("unknown layer kind in JSON: " + s);
}

}  // namespace

json layer_to_json(const LayerSpec& l) {
  json j;
  j["kind"] = kind_to_json_name(l.kind);
  switch (l.kind) {
    case LayerKind::Dense:
    case LayerKind::TimeDistributedDense:
      j["units"] = l.units;
      j["activation"] = activation_name(l.activation);
      j["init"] = init_to_string(l.init);
      break;
    case LayerKind::Conv2D:
      j["filters"] = l.filters;
      j["kernel"] = l.kernel;
      j["activation"] = activation_name(l.activation);
      j["init"] = init_to_string(l.init);
      break;
    case LayerKind::MaxPool2D:
      j["pool"] = l.pool;
      break;
    case LayerKind::Flatten:
    case LayerKind::BatchNorm:
    case LayerKind::Concatenate:
      break;
    case LayerKind::Dropout:
      j["rate"] = l.rate;
      break;
    case LayerKind::Embedding:
      j["vocab_size"] = l.vocab_size;
      j["embed_dim"] = l.embed_dim;
      j["init"] = init_to_string(l.init);
      break;
    case LayerKind::Lstm:
      j["units"] = l.units;
      j["return_sequences"] = l.return_sequences;
      j["init"] = init_to_string(l.init);
      break;
    case LayerKind::RepeatVector:
      j["count"] = l.repeat;
      break;
    case LayerKind::Activation:
      j["activation"] = activation_name(l.activation);
      break;
  }
  if (!l.name.empty()) j["name"] = l.name;
  if (!l.from.empty()) j["from"] = l.from;
  return j;
}

LayerSpec layer_from_json(const json& j) {
  LayerSpec l;
  l.kind = kind_from_json_name(j.at("kind").get<std::string>());
  if (j.contains("units")) l.units = j.at("units").get<int>();
  if (j.contains("filters")) l.filters = j.at("filters").get<int>();
  if (j.contains("kernel")) l.kernel = j.at("kernel").get<std::array<int, 2>>();
  if (j.contains("pool")) l.pool = j.at("pool").get<std::array<int, 2>>();
  if (j.contains("rate")) l.rate = j.at("rate").get<double>();
  if (j.contains("vocab_size")) l.vocab_size = j.at("vocab_size").get<int>();
  if (j.contains("embed_dim")) l.embed_dim = j.at("embed_dim").get<int>();
  if (j.contains("count")) l.repeat = j.at("count").get<int>();
  if (j.contains("return_sequences")) l.return_sequences = j.at("return_sequences").get<bool>();
  if (j.contains("activation")) l.activation = activation_from_name(j.at("activation").get<std::string>());
  if (j.contains("init")) l.init = init_from_string(j.at("init").get<std::string>());
  if (j.contains("name")) l.name = j.at("name").get<std::string>();
  if (j.contains("from")) l.from = j.at("from").get<std::vector<std::string>>();
  return l;
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["loss"] = loss_name(c.loss);
  j["optimizer"] = optimizer_name(c.optimizer);
  j["lr"] = c.learning_rate;
  if (c.optimizer == OptimizerKind::Sgd) {
    j["momentum"] = c.momentum;
  } else {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps"] = c.epsilon;
  }
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["clip"] = c.gradient_clip ? json(*c.gradient_clip) : json(nullptr);
  j["seed"] = c.seed;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.loss = loss_from_name(j.at("loss").get<std::string>());
  c.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  c.learning_rate = j.at("lr").get<double>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
  if (j.contains("eps")) c.epsilon = j.at("eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.epochs = j.at("epochs").get<int>();
  if (j.contains("clip") && !j.at("clip").is_null()) c.gradient_clip = j.at("clip").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json model_config_to_json(const ModelConfig& mc) {
  if (mc.spec.inputs.size() != 1)
    throw Error("model JSON form requires exactly one input, got " +
                std::to_string(mc.spec.inputs.size()));
  json j;
  j["input_shape"] = mc.spec.inputs[0].shape;
  json layers = json::array();
  for (const auto& l : mc.spec.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  j["train"] = train_config_to_json(mc.train);
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig mc;
  InputSpec in;
  in.name = "input";
  in.shape = j.at("input_shape").get<std::vector<std::size_t>>();
  mc.spec.inputs.push_back(std::move(in));
  for (const auto& lj : j.at("layers")) mc.spec.layers.push_back(layer_from_json(lj));
  mc.train = train_config_from_json(j.at("train"));
  validate_spec_fields(mc.spec);
  return mc;
}

std::string model_config_to_string(const ModelConfig& mc) {
  return model_config_to_json(mc).dump(2);
}

ModelConfig model_config_from_string(const std::string& text) {
  json j = json::parse(text);
  return model_config_from_json(j);
}

}  // namespace d4d
