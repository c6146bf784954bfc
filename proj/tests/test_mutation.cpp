#include <doctest.h>

#include <cmath>
#include <map>

#include "d4d/datasets.hpp"
#include "d4d/kill.hpp"
#include "d4d/mutation.hpp"

using namespace d4d;

namespace {

ModelConfig softmax_classifier() {
  ModelConfig mc;
  mc.spec.inputs = {{"input", {2}}};
  LayerSpec d1;
  d1.kind = LayerKind::Dense;
  d1.units = 8;
  d1.activation = ActivationKind::Relu;
  LayerSpec d2;
  d2.kind = LayerKind::Dense;
  d2.units = 3;
  d2.activation = ActivationKind::Softmax;
  mc.spec.layers = {d1, d2};
  mc.train.loss = LossKind::CategoricalCrossentropy;
  mc.train.optimizer = OptimizerKind::Adam;
  mc.train.learning_rate = 5e-3;
  mc.train.batch_size = 16;
  mc.train.epochs = 15;
  mc.train.seed = 33;
  return mc;
}

MutationOp op_change_loss(LossKind to) {
  MutationOp op;
  op.category = OperatorCategory::ChangeLossFunction;
  op.new_loss = to;
  return op;
}

MutationOp op_change_lr(double to) {
  MutationOp op;
  op.category = OperatorCategory::ChangeLearningRate;
  op.new_learning_rate = to;
  return op;
}

MutationOp op_with_label(OperatorCategory cat, double x) {
  MutationOp op;
  op.category = cat;
  op.new_learning_rate = x;  // only used to make ops distinct
  return op;
}

}  // namespace

TEST_CASE("operator labels match the ten-category table") {
  CHECK(label_of(OperatorCategory::ChangeLossFunction) == 1);
  CHECK(label_of(OperatorCategory::ChangeBatchSize) == 2);
  CHECK(label_of(OperatorCategory::ChangeLearningRate) == 3);
  CHECK(label_of(OperatorCategory::ChangeActivationFunction) == 4);
  CHECK(label_of(OperatorCategory::AddActivationFunction) == 5);
  CHECK(label_of(OperatorCategory::RemoveActivationFunction) == 6);
  CHECK(label_of(OperatorCategory::ChangeOptimisationFunction) == 7);
  CHECK(label_of(OperatorCategory::ChangeGradientClip) == 8);
  CHECK(label_of(OperatorCategory::ChangeWeightsInitialisation) == 9);
  CHECK(label_of(OperatorCategory::ChangeDropoutRate) == 10);
  CHECK(label_name(0) == "Correct_Model");
  CHECK(label_name(1) == "Change_Loss_Function");
  CHECK(label_name(10) == "Change_Dropout_Rate");
  CHECK(all_categories().size() == 10);
}

TEST_CASE("apply_operator changes exactly one thing and keeps inputs pure") {
  const ModelConfig base = softmax_classifier();
  const ModelConfig snapshot = base;

  SUBCASE("loss swap") {
    const ModelConfig mut = apply_operator(base, op_change_loss(LossKind::Mse), 100);
    CHECK(mut.train.loss == LossKind::Mse);
    CHECK(mut.spec == base.spec);
    ModelConfig reverted = apply_operator(mut, op_change_loss(LossKind::CategoricalCrossentropy), 100);
    CHECK(reverted == base);
  }
  SUBCASE("optimizer swap") {
    MutationOp op;
    op.category = OperatorCategory::ChangeOptimisationFunction;
    op.new_optimizer = OptimizerKind::Sgd;
    const ModelConfig mut = apply_operator(base, op, 100);
    CHECK(mut.train.optimizer == OptimizerKind::Sgd);
    CHECK(mut.train.learning_rate == base.train.learning_rate);
  }
  SUBCASE("remove activation leaves everything else byte-equal") {
    MutationOp op;
    op.category = OperatorCategory::RemoveActivationFunction;
    op.layer_index = 0;
    const ModelConfig mut = apply_operator(base, op, 100);
    CHECK(mut.spec.layers[0].activation == ActivationKind::None);
    ModelConfig fixed = mut;
    fixed.spec.layers[0].activation = ActivationKind::Relu;
    CHECK(fixed == base);
  }
  SUBCASE("inapplicable operators throw") {
    MutationOp drop;
    drop.category = OperatorCategory::ChangeDropoutRate;
    drop.layer_index = 0;
    drop.new_dropout_rate = 0.9;
    CHECK_THROWS_AS(apply_operator(base, drop, 100), InapplicableError);

    MutationOp add;
    add.category = OperatorCategory::AddActivationFunction;
    add.layer_index = 0;  // already has relu
    add.new_activation = ActivationKind::Tanh;
    CHECK_THROWS_AS(apply_operator(base, add, 100), InapplicableError);

    MutationOp bs;
    bs.category = OperatorCategory::ChangeBatchSize;
    bs.new_batch_size = 1000;  // beyond dataset
    CHECK_THROWS_AS(apply_operator(base, bs, 100), InapplicableError);
  }
  CHECK(base == snapshot);  // inputs never mutate
}

TEST_CASE("welch test and effect size on hand-checked samples") {
  const std::vector<double> a{0.9, 0.92, 0.91, 0.89, 0.9};
  const std::vector<double> b{0.5, 0.52, 0.48, 0.51, 0.49};
  const double p = welch_one_tailed_p(a, b);
  CHECK(p < 1e-6);
  CHECK(cohens_d(a, b) > 5.0);

  // identical samples: no effect, direction-neutral p
  const double p_same = welch_one_tailed_p(a, a);
  CHECK(p_same >= 0.45);
  CHECK(cohens_d(a, a) == 0.0);

  // degenerate zero-variance samples decide by direction alone
  const std::vector<double> c{0.8, 0.8, 0.8};
  const std::vector<double> d{0.6, 0.6, 0.6};
  CHECK(welch_one_tailed_p(c, d) == 0.0);
  CHECK(welch_one_tailed_p(d, c) == 1.0);
  CHECK(welch_one_tailed_p(c, c) == 1.0);
  CHECK(std::isinf(cohens_d(c, d)));
}

TEST_CASE("verdict needs significance, effect and drop together") {
  KillThresholds thr;
  const std::vector<double> orig{0.9, 0.91, 0.9, 0.89, 0.9};
  // significant but tiny drop: not killed
  const std::vector<double> tiny{0.88, 0.87, 0.88, 0.875, 0.88};
  const KillVerdict weak = verdict_from_accuracies(orig, tiny, thr);
  CHECK(weak.p_value < 0.05);
  CHECK_FALSE(weak.killed);
  // big drop: killed
  const std::vector<double> broken{0.3, 0.35, 0.32, 0.31, 0.3};
  const KillVerdict strong = verdict_from_accuracies(orig, broken, thr);
  CHECK(strong.killed);
  CHECK(strong.mean_acc_mut < strong.mean_acc_orig);
}

TEST_CASE("identity mutation is never killed, a crippling one is") {
  const ModelConfig seed = softmax_classifier();
  const TaskData task = make_blobs(80, 40, 3, 0.5, Rng(44));

  const KillVerdict self = is_killed(seed, seed, task, 5);
  CHECK_FALSE(self.killed);
  CHECK(self.p_value >= 0.95);  // identical paired runs
  CHECK(self.n_runs == 5);
  CHECK(self.mean_acc_orig == self.mean_acc_mut);

  const ModelConfig starved = apply_operator(seed, op_change_lr(1e-7), task.train.size());
  const KillVerdict kv = is_killed(seed, starved, task, 5);
  CHECK(kv.killed);
  CHECK(kv.mean_acc_mut < kv.mean_acc_orig);
}

TEST_CASE("algorithm count law against a brute-force enumerator") {
  RngStream s = Rng(1234).stream();
  for (int trial = 0; trial < 100; ++trial) {
    // random report shape: a few categories, up to 4 killed ops each
    std::vector<MutationOp> killed;
    std::map<int, int> sizes;
    const auto cats = all_categories();
    for (OperatorCategory c : cats) {
      const int k = static_cast<int>(s.below(4));
      sizes[label_of(c)] = k;
      for (int i = 0; i < k; ++i) killed.push_back(op_with_label(c, s.uniform()));
    }
    const auto pairs = combine_killed_pairs(killed);
    // brute force: sum over unordered category pairs of the product
    std::size_t expected = 0;
    for (auto it1 = sizes.begin(); it1 != sizes.end(); ++it1) {
      for (auto it2 = std::next(it1); it2 != sizes.end(); ++it2) {
        expected += static_cast<std::size_t>(it1->second) * it2->second;
      }
    }
    CHECK(pairs.size() == expected);
    for (const auto& [a, b] : pairs) CHECK(a.category != b.category);
  }
}

TEST_CASE("empty categories contribute no pairs") {
  std::vector<MutationOp> killed;
  killed.push_back(op_change_loss(LossKind::Mse));
  CHECK(combine_killed_pairs(killed).empty());
  killed.push_back(op_change_loss(LossKind::BinaryCrossentropy));
  CHECK(combine_killed_pairs(killed).empty());  // same category
  killed.push_back(op_change_lr(10.0));
  CHECK(combine_killed_pairs(killed).size() == 2);  // 2 loss ops x 1 lr op
}

TEST_CASE("labels of a dual mutant are recoverable from its ops") {
  std::vector<MutationOp> killed;
  killed.push_back(op_change_loss(LossKind::Mse));
  MutationOp sgd;
  sgd.category = OperatorCategory::ChangeOptimisationFunction;
  sgd.new_optimizer = OptimizerKind::Sgd;
  killed.push_back(sgd);
  const auto pairs = combine_killed_pairs(killed);
  REQUIRE(pairs.size() == 1);
  std::vector<int> labels{pairs[0].first.label(), pairs[0].second.label()};
  std::sort(labels.begin(), labels.end());
  CHECK(labels == std::vector<int>{1, 7});
}

TEST_CASE("operator grids parse from json and slugs are stable") {
  const auto grid = OperatorGrid::from_json(nlohmann::json::parse(R"({
    "change_loss": ["mse"],
    "change_learning_rate": [1e-7],
    "change_batch_size": ["full", 4],
    "remove_activation": [{"layer": 2}],
    "change_weights_init": [{"layer": 0, "to": "zeros"}]
  })"));
  CHECK(grid.ops.size() == 6);
  CHECK(grid.ops[0].slug() == "loss-mse");
  CHECK(grid.ops[1].slug() == "bs-full");
  CHECK(grid.ops[2].slug() == "bs-4");
  CHECK(grid.ops[3].slug() == "lr-1e-07");
  CHECK(grid.ops[4].slug() == "rmact-2");
  CHECK(grid.ops[5].slug() == "init-0-zeros");
}
