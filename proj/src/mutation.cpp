#include "d4d/mutation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>

#include "d4d/error.hpp"

using nlohmann::json;

namespace d4d {

int label_of(OperatorCategory c) { return static_cast<int>(c); }

std::string category_name(OperatorCategory c) {
  switch (c) {
    case OperatorCategory::ChangeLossFunction: return "Change_Loss_Function";
    case OperatorCategory::ChangeBatchSize: return "Change_Batch_Size";
    case OperatorCategory::ChangeLearningRate: return "Change_Learning_Rate";
    case OperatorCategory::ChangeActivationFunction: return "Change_Activation_Function";
    case OperatorCategory::AddActivationFunction: return "Add_Activation_Function";
    case OperatorCategory::RemoveActivationFunction: return "Remove_Activation_Function";
    case OperatorCategory::ChangeOptimisationFunction: return "Change_Optimisation_Function";
    case OperatorCategory::ChangeGradientClip: return "Change_Gradient_Clip";
    case OperatorCategory::ChangeWeightsInitialisation: return "Change_Weights_Initialisation";
    case OperatorCategory::ChangeDropoutRate: return "Change_Dropout_Rate";
  }
  throw Error("unknown operator category");
}

std::string label_name(int label) {
  if (label == 0) return "Correct_Model";
  if (label < 1 || label > 10) throw Error("label out of range: " + std::to_string(label));
  return category_name(static_cast<OperatorCategory>(label));
}

std::vector<OperatorCategory> all_categories() {
  std::vector<OperatorCategory> cats;
  for (int l = 1; l <= 10; ++l) cats.push_back(static_cast<OperatorCategory>(l));
  return cats;
}

namespace {

std::string short_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

}  // namespace

std::string MutationOp::slug() const {
  switch (category) {
    case OperatorCategory::ChangeLossFunction:
      return "loss-" + loss_name(new_loss);
    case OperatorCategory::ChangeBatchSize:
      return "bs-" + (new_batch_size == 0 ? std::string("full") : std::to_string(new_batch_size));
    case OperatorCategory::ChangeLearningRate:
      return "lr-" + short_double(new_learning_rate);
    case OperatorCategory::ChangeActivationFunction:
      return "act-" + std::to_string(layer_index) + "-" + activation_name(new_activation);
    case OperatorCategory::AddActivationFunction:
      return "addact-" + std::to_string(layer_index) + "-" + activation_name(new_activation);
    case OperatorCategory::RemoveActivationFunction:
      return "rmact-" + std::to_string(layer_index);
    case OperatorCategory::ChangeOptimisationFunction:
      return "opt-" + optimizer_name(new_optimizer);
    case OperatorCategory::ChangeGradientClip:
      return "clip-" + short_double(new_clip);
    case OperatorCategory::ChangeWeightsInitialisation: {
      std::string init = init_to_string(new_init);
      if (init.rfind("normal(", 0) == 0) init = "normal-" + short_double(new_init.stddev);
      return "init-" + std::to_string(layer_index) + "-" + init;
    }
    case OperatorCategory::ChangeDropoutRate:
      return "drop-" + std::to_string(layer_index) + "-" + short_double(new_dropout_rate);
  }
  throw Error("unknown operator category");
}

namespace {

LayerSpec& target_layer(ModelConfig& mc, const MutationOp& op, const std::string& what) {
  if (op.layer_index < 0 || static_cast<std::size_t>(op.layer_index) >= mc.spec.layers.size())
    throw InapplicableError(what + ": layer index " + std::to_string(op.layer_index) +
                            " out of range");
  return mc.spec.layers[static_cast<std::size_t>(op.layer_index)];
}

bool has_weights(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Dense:
    case LayerKind::TimeDistributedDense:
    case LayerKind::Conv2D:
    case LayerKind::Embedding:
    case LayerKind::Lstm:
      return true;
    default:
      return false;
  }
}

bool takes_activation(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Dense:
    case LayerKind::TimeDistributedDense:
    case LayerKind::Conv2D:
    case LayerKind::Activation:
      return true;
    default:
      return false;
  }
}

}  // namespace

ModelConfig apply_operator(const ModelConfig& base, const MutationOp& op,
                           std::size_t dataset_size) {
  ModelConfig mc = base;
  switch (op.category) {
    case OperatorCategory::ChangeLossFunction:
      if (mc.train.loss == op.new_loss)
        throw InapplicableError("Change_Loss_Function: loss already " + loss_name(op.new_loss));
      mc.train.loss = op.new_loss;
      break;
    case OperatorCategory::ChangeBatchSize: {
      int bs = op.new_batch_size == 0 ? static_cast<int>(dataset_size) : op.new_batch_size;
      if (bs < 1) throw InapplicableError("Change_Batch_Size: batch size must be >= 1");
      if (dataset_size > 0 && bs > static_cast<int>(dataset_size))
        throw InapplicableError("Change_Batch_Size: " + std::to_string(bs) +
                                " exceeds dataset size " + std::to_string(dataset_size));
      if (bs == mc.train.batch_size)
        throw InapplicableError("Change_Batch_Size: batch size already " + std::to_string(bs));
      mc.train.batch_size = bs;
      break;
    }
    case OperatorCategory::ChangeLearningRate:
      if (!(op.new_learning_rate > 0))
        throw InapplicableError("Change_Learning_Rate: rate must be > 0");
      if (op.new_learning_rate == mc.train.learning_rate)
        throw InapplicableError("Change_Learning_Rate: rate already " +
                                std::to_string(op.new_learning_rate));
      mc.train.learning_rate = op.new_learning_rate;
      break;
    case OperatorCategory::ChangeActivationFunction: {
      LayerSpec& l = target_layer(mc, op, "Change_Activation_Function");
      if (!takes_activation(l))
        throw InapplicableError("Change_Activation_Function: layer " +
                                std::to_string(op.layer_index) + " takes no activation");
      if (l.activation == ActivationKind::None)
        throw InapplicableError("Change_Activation_Function: layer " +
                                std::to_string(op.layer_index) + " has no activation to change");
      if (op.new_activation == ActivationKind::None)
        throw InapplicableError("Change_Activation_Function: use Remove_Activation_Function");
      if (l.activation == op.new_activation)
        throw InapplicableError("Change_Activation_Function: activation already " +
                                activation_name(op.new_activation));
      l.activation = op.new_activation;
      break;
    }
    case OperatorCategory::AddActivationFunction: {
      LayerSpec& l = target_layer(mc, op, "Add_Activation_Function");
      if (!takes_activation(l) || l.kind == LayerKind::Activation)
        throw InapplicableError("Add_Activation_Function: layer " +
                                std::to_string(op.layer_index) + " cannot take one");
      if (l.activation != ActivationKind::None)
        throw InapplicableError("Add_Activation_Function: layer " +
                                std::to_string(op.layer_index) + " already has an activation");
      if (op.new_activation == ActivationKind::None)
        throw InapplicableError("Add_Activation_Function: nothing to add");
      l.activation = op.new_activation;
      break;
    }
    case OperatorCategory::RemoveActivationFunction: {
      LayerSpec& l = target_layer(mc, op, "Remove_Activation_Function");
      if (l.kind == LayerKind::Activation)
        throw InapplicableError("Remove_Activation_Function: standalone activation layers stay");
      if (l.activation == ActivationKind::None)
        throw InapplicableError("Remove_Activation_Function: layer " +
                                std::to_string(op.layer_index) + " has no activation");
      l.activation = ActivationKind::None;
      break;
    }
    case OperatorCategory::ChangeOptimisationFunction:
      if (mc.train.optimizer == op.new_optimizer && !op.new_lr_override)
        throw InapplicableError("Change_Optimisation_Function: optimizer already " +
                                optimizer_name(op.new_optimizer));
      mc.train.optimizer = op.new_optimizer;
      mc.train.momentum = op.new_momentum;
      if (op.new_lr_override) mc.train.learning_rate = *op.new_lr_override;
      break;
    case OperatorCategory::ChangeGradientClip:
      if (!(op.new_clip > 0)) throw InapplicableError("Change_Gradient_Clip: clip must be > 0");
      if (mc.train.gradient_clip && *mc.train.gradient_clip == op.new_clip)
        throw InapplicableError("Change_Gradient_Clip: clip already " +
                                std::to_string(op.new_clip));
      mc.train.gradient_clip = op.new_clip;
      break;
    case OperatorCategory::ChangeWeightsInitialisation: {
      LayerSpec& l = target_layer(mc, op, "Change_Weights_Initialisation");
      if (!has_weights(l))
        throw InapplicableError("Change_Weights_Initialisation: layer " +
                                std::to_string(op.layer_index) + " has no weights");
      if (l.init == op.new_init)
        throw InapplicableError("Change_Weights_Initialisation: init already " +
                                init_to_string(op.new_init));
      l.init = op.new_init;
      break;
    }
    case OperatorCategory::ChangeDropoutRate: {
      LayerSpec& l = target_layer(mc, op, "Change_Dropout_Rate");
      if (l.kind != LayerKind::Dropout)
        throw InapplicableError("Change_Dropout_Rate: layer " + std::to_string(op.layer_index) +
                                " is not a dropout layer");
      if (!(op.new_dropout_rate >= 0.0 && op.new_dropout_rate < 1.0))
        throw InapplicableError("Change_Dropout_Rate: rate must be in [0,1)");
      if (l.rate == op.new_dropout_rate)
        throw InapplicableError("Change_Dropout_Rate: rate already " +
                                std::to_string(op.new_dropout_rate));
      l.rate = op.new_dropout_rate;
      break;
    }
  }
  return mc;
}

OperatorGrid OperatorGrid::from_json(const json& j) {
  OperatorGrid grid;
  auto push = [&grid](MutationOp op) { grid.ops.push_back(std::move(op)); };
  if (j.contains("change_loss")) {
    for (const auto& v : j.at("change_loss")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeLossFunction;
      op.new_loss = loss_from_name(v.get<std::string>());
      push(op);
    }
  }
  if (j.contains("change_batch_size")) {
    for (const auto& v : j.at("change_batch_size")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeBatchSize;
      op.new_batch_size = v.is_string() ? 0 : v.get<int>();  // "full" -> 0
      push(op);
    }
  }
  if (j.contains("change_learning_rate")) {
    for (const auto& v : j.at("change_learning_rate")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeLearningRate;
      op.new_learning_rate = v.get<double>();
      push(op);
    }
  }
  if (j.contains("change_activation")) {
    for (const auto& v : j.at("change_activation")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeActivationFunction;
      op.layer_index = v.at("layer").get<int>();
      op.new_activation = activation_from_name(v.at("to").get<std::string>());
      push(op);
    }
  }
  if (j.contains("add_activation")) {
    for (const auto& v : j.at("add_activation")) {
      MutationOp op;
      op.category = OperatorCategory::AddActivationFunction;
      op.layer_index = v.at("layer").get<int>();
      op.new_activation = activation_from_name(v.at("to").get<std::string>());
      push(op);
    }
  }
  if (j.contains("remove_activation")) {
    for (const auto& v : j.at("remove_activation")) {
      MutationOp op;
      op.category = OperatorCategory::RemoveActivationFunction;
      op.layer_index = v.at("layer").get<int>();
      push(op);
    }
  }
  if (j.contains("change_optimizer")) {
    for (const auto& v : j.at("change_optimizer")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeOptimisationFunction;
      op.new_optimizer = optimizer_from_name(v.at("kind").get<std::string>());
      if (v.contains("momentum")) op.new_momentum = v.at("momentum").get<double>();
      if (v.contains("lr")) op.new_lr_override = v.at("lr").get<double>();
      push(op);
    }
  }
  if (j.contains("change_gradient_clip")) {
    for (const auto& v : j.at("change_gradient_clip")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeGradientClip;
      op.new_clip = v.get<double>();
      push(op);
    }
  }
  if (j.contains("change_weights_init")) {
    for (const auto& v : j.at("change_weights_init")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeWeightsInitialisation;
      op.layer_index = v.at("layer").get<int>();
      op.new_init = init_from_string(v.at("to").get<std::string>());
      push(op);
    }
  }
  if (j.contains("change_dropout_rate")) {
    for (const auto& v : j.at("change_dropout_rate")) {
      MutationOp op;
      op.category = OperatorCategory::ChangeDropoutRate;
      op.layer_index = v.at("layer").get<int>();
      op.new_dropout_rate = v.at("rate").get<double>();
      push(op);
    }
  }
  return grid;
}

json OperatorGrid::to_json() const {
  json j = json::object();
  for (const MutationOp& op : ops) {
    switch (op.category) {
      case OperatorCategory::ChangeLossFunction:
        j["change_loss"].push_back(loss_name(op.new_loss));
        break;
      case OperatorCategory::ChangeBatchSize:
        if (op.new_batch_size == 0) j["change_batch_size"].push_back("full");
        else j["change_batch_size"].push_back(op.new_batch_size);
        break;
      case OperatorCategory::ChangeLearningRate:
        j["change_learning_rate"].push_back(op.new_learning_rate);
        break;
      case OperatorCategory::ChangeActivationFunction:
        j["change_activation"].push_back(
            {{"layer", op.layer_index}, {"to", activation_name(op.new_activation)}});
        break;
      case OperatorCategory::AddActivationFunction:
        j["add_activation"].push_back(
            {{"layer", op.layer_index}, {"to", activation_name(op.new_activation)}});
        break;
      case OperatorCategory::RemoveActivationFunction:
        j["remove_activation"].push_back({{"layer", op.layer_index}});
        break;
      case OperatorCategory::ChangeOptimisationFunction: {
        json entry = {{"kind", optimizer_name(op.new_optimizer)}, {"momentum", op.new_momentum}};
        if (op.new_lr_override) entry["lr"] = *op.new_lr_override;
        j["change_optimizer"].push_back(std::move(entry));
        break;
      }
      case OperatorCategory::ChangeGradientClip:
        j["change_gradient_clip"].push_back(op.new_clip);
        break;
      case OperatorCategory::ChangeWeightsInitialisation:
        j["change_weights_init"].push_back(
            {{"layer", op.layer_index}, {"to", init_to_string(op.new_init)}});
        break;
      case OperatorCategory::ChangeDropoutRate:
        j["change_dropout_rate"].push_back(
            {{"layer", op.layer_index}, {"rate", op.new_dropout_rate}});
        break;
    }
  }
  return j;
}

std::vector<std::pair<MutationOp, MutationOp>> combine_killed_pairs(
    const std::vector<MutationOp>& killed) {
  std::map<int, std::vector<const MutationOp*>> by_label;
  for (const MutationOp& op : killed) by_label[op.label()].push_back(&op);
  std::vector<std::pair<MutationOp, MutationOp>> pairs;
  for (auto it1 = by_label.begin(); it1 != by_label.end(); ++it1) {
    for (auto it2 = std::next(it1); it2 != by_label.end(); ++it2) {
      for (const MutationOp* a : it1->second) {
        for (const MutationOp* b : it2->second) {
          pairs.emplace_back(*a, *b);
        }
      }
    }
  }
  return pairs;
}

}  // namespace d4d
