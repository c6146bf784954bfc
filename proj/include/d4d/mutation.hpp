#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "d4d/model_spec.hpp"

namespace d4d {

// The ten root-cause categories; enum values are the class labels (0 is the
// correct-model label and never a mutation).
enum class OperatorCategory : int {
  ChangeLossFunction = 1,
  ChangeBatchSize = 2,
  ChangeLearningRate = 3,
  ChangeActivationFunction = 4,
  AddActivationFunction = 5,
  RemoveActivationFunction = 6,
  ChangeOptimisationFunction = 7,
  ChangeGradientClip = 8,
  ChangeWeightsInitialisation = 9,
  ChangeDropoutRate = 10,
};

constexpr int kNumFaultClasses = 11;  // label 0 plus the ten categories

int label_of(OperatorCategory c);
std::string category_name(OperatorCategory c);    // e.g. "Change_Loss_Function"
std::string label_name(int label);                // includes 0 -> "Correct_Model"
std::vector<OperatorCategory> all_categories();

// One concrete mutation. Fields other than the ones its category consumes
// are ignored.
struct MutationOp {
  OperatorCategory category{};
  LossKind new_loss = LossKind::Mse;
  int new_batch_size = 0;            // 0 means "full dataset"
  double new_learning_rate = 0.0;
  int layer_index = -1;              // activation / init / dropout targets
  ActivationKind new_activation = ActivationKind::None;
  OptimizerKind new_optimizer = OptimizerKind::Sgd;
  double new_momentum = 0.0;
  std::optional<double> new_lr_override;  // optimizer op may also reset lr
  double new_clip = 0.0;
  Init new_init{};
  double new_dropout_rate = 0.0;

  int label() const { return label_of(category); }
  // Filesystem-safe description, e.g. "lr-1e-07" or "act-2-sigmoid".
  std::string slug() const;

  bool operator==(const MutationOp&) const = default;
};

// Applies exactly one change, leaving the originals untouched. Throws
// InapplicableError when the op does not fit the model (no such layer, no
// activation to remove, value equal to the current one, ...).
ModelConfig apply_operator(const ModelConfig& base, const MutationOp& op,
                           std::size_t dataset_size);

// Concrete parameterizations per category, as read from grid JSON.
struct OperatorGrid {
  std::vector<MutationOp> ops;

  static OperatorGrid from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

// Algorithm core for multi-fault generation: for every unordered pair of
// distinct categories, the full Cartesian product of their killed ops.
std::vector<std::pair<MutationOp, MutationOp>> combine_killed_pairs(
    const std::vector<MutationOp>& killed_single_ops);

}  // namespace d4d
