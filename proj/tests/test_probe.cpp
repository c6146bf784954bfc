#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "d4d/datasets.hpp"
#include "d4d/feature_matrix.hpp"
#include "d4d/trace_io.hpp"

using namespace d4d;

namespace {

LayerSpec dense(int units, ActivationKind act, Init init = {}) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  l.activation = act;
  l.init = init;
  return l;
}

std::vector<EpochSnapshot> instrumented_run(const ModelSpec& spec, const TaskData& task,
                                            TrainConfig cfg) {
  Network net(spec, cfg.seed);
  const auto [lo, hi] = dataset_range(task.train);
  Instrument inst(ProbeConfig{}, lo, hi);
  train(net, task.train, cfg, &inst);
  return inst.snapshots();
}

}  // namespace

TEST_CASE("snapshot carries per-layer records, loss, accuracy and data range") {
  TaskData task = make_blobs(40, 20, 2, 0.5, Rng(31));
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(6, ActivationKind::Sigmoid), dense(2, ActivationKind::Softmax)};
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 10;
  cfg.epochs = 3;
  cfg.seed = 5;
  const auto snaps = instrumented_run(spec, task, cfg);
  REQUIRE(snaps.size() == 3);
  for (const auto& s : snaps) {
    CHECK(s.layers.size() == 2);  // one record per layer
    CHECK(std::isfinite(s.loss));
    CHECK(s.accuracy >= 0.0);
    CHECK(s.accuracy <= 1.0);
    CHECK(s.data_min < s.data_max);
    // blobs coordinates live a few units from the origin
    CHECK(s.data_min < 0.0);
    CHECK(s.data_max > 0.0);
    // sigmoid layer gets a saturation measurement, softmax layer none
    CHECK(s.layers[0].saturation_frac >= 0.0);
    CHECK(s.layers[1].saturation_frac == 0.0);
    // weight stats populated
    CHECK(s.layers[0].weight_norm > 0.0);
    CHECK(s.layers[0].grad_norm >= 0.0);
  }
  // DR is constant across epochs
  CHECK(snaps[0].data_min == snaps[2].data_min);
  CHECK(snaps[0].data_max == snaps[2].data_max);
}

TEST_CASE("dead relu layer reports a full dead-node fraction") {
  // relu with a large negative frozen bias: every unit inactive everywhere
  TaskData task = make_digits(30, 10, 0.1, Rng(32));
  ModelSpec spec;
  spec.inputs = {{"input", {8, 8, 1}}};
  LayerSpec f;
  f.kind = LayerKind::Flatten;
  spec.layers = {f, dense(10, ActivationKind::Relu), dense(10, ActivationKind::Softmax)};
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 10;
  cfg.epochs = 3;
  cfg.seed = 6;

  Network net(spec, cfg.seed);
  net.layer(1).params()[1].value.fill(-10.0);  // bias
  const auto [lo, hi] = dataset_range(task.train);
  Instrument inst(ProbeConfig{}, lo, hi);
  train(net, task.train, cfg, &inst);
  for (const auto& s : inst.snapshots()) {
    CHECK(s.layers[1].dead_node_frac >= 0.99);
  }
}

TEST_CASE("deep sigmoid stack shows vanishing gradients toward the input") {
  TaskData task = make_blobs(40, 20, 2, 0.5, Rng(33));
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  for (int i = 0; i < 9; ++i) spec.layers.push_back(dense(16, ActivationKind::Sigmoid));
  spec.layers.push_back(dense(2, ActivationKind::Softmax));
  TrainConfig cfg;
  cfg.loss = LossKind::Mse;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 1e-3;
  cfg.batch_size = 40;
  cfg.epochs = 1;
  cfg.seed = 7;
  const auto snaps = instrumented_run(spec, task, cfg);
  const auto& first = snaps[0].layers.front();
  const auto& last = snaps[0].layers[8];
  CHECK(first.vanishing_gradient * 10.0 <= last.vanishing_gradient);
}

TEST_CASE("saturated sigmoid layer crosses the saturation probe") {
  // inputs scaled far beyond the sigmoid's linear range
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(8, ActivationKind::Sigmoid, Init{InitKind::Normal, 100.0}),
                 dense(2, ActivationKind::Softmax)};
  TaskData task = make_blobs(40, 20, 2, 0.5, Rng(34));
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 1e-4;
  cfg.batch_size = 20;
  cfg.epochs = 2;
  cfg.seed = 8;
  const auto snaps = instrumented_run(spec, task, cfg);
  CHECK(snaps[0].layers[0].saturation_frac >= 0.9);
}

TEST_CASE("NaN loss passes through the snapshot untouched") {
  EpochSnapshot s;
  s.loss = std::nan("");
  s.layers.resize(1);
  const FeatureMatrix fm = assemble_feature_matrix({s}, 4, 2);
  CHECK(fm.at(0, 0) == kNanSentinel);  // sanitized only at assembly
}

TEST_CASE("feature matrix has the pinned fixed shape and padding") {
  std::vector<EpochSnapshot> snaps(3);
  for (int e = 0; e < 3; ++e) {
    snaps[e].epoch = e;
    snaps[e].loss = 1.0 + e;
    snaps[e].accuracy = 0.5;
    snaps[e].data_min = -1;
    snaps[e].data_max = 1;
    snaps[e].layers.resize(2);
    snaps[e].layers[0].weights.mean = 0.25;
    snaps[e].layers[1].tune_learning = 0.5;
  }
  const int T = 5, Lmax = 4;
  const FeatureMatrix fm = assemble_feature_matrix(snaps, T, Lmax);
  CHECK(fm.rows == 5);
  CHECK(fm.cols == 4 + 33 * 4);
  // epochs beyond the trained count are all-zero rows
  for (std::size_t c = 0; c < fm.cols; ++c) {
    CHECK(fm.at(3, c) == 0.0);
    CHECK(fm.at(4, c) == 0.0);
  }
  // layer slots beyond the model depth are all-zero
  for (std::size_t c = 4 + 2 * 33; c < fm.cols; ++c) CHECK(fm.at(0, c) == 0.0);
  // populated cells land in the right slots
  CHECK(fm.at(0, 0) == 1.0);
  CHECK(fm.at(0, 4) == 0.25);            // L1 M_W
  CHECK(fm.at(0, 4 + 33 + 29) == 0.5);   // L2 TL
  // reserved columns stay zero
  CHECK(fm.at(0, 4 + 30) == 0.0);
  CHECK(fm.at(0, 4 + 31) == 0.0);
  CHECK(fm.at(0, 4 + 32) == 0.0);
}

TEST_CASE("sanitization replaces every non-finite value") {
  EpochSnapshot s;
  const double nan = std::nan("");
  const double inf = std::numeric_limits<double>::infinity();
  s.loss = nan;
  s.accuracy = inf;
  s.data_min = -inf;
  s.data_max = 1.0;
  s.layers.resize(1);
  s.layers[0].grads.max = inf;
  s.layers[0].weights.mean = nan;
  const FeatureMatrix fm = assemble_feature_matrix({s}, 2, 1);
  CHECK(fm.at(0, 0) == kNanSentinel);
  CHECK(fm.at(0, 1) == kPosInfSentinel);
  CHECK(fm.at(0, 2) == kNegInfSentinel);
  CHECK(fm.at(0, 4) == kNanSentinel);        // L1 M_W
  CHECK(fm.at(0, 4 + 8 + 2) == kPosInfSentinel);  // L1 Ma_G
  for (double v : fm.values) CHECK(std::isfinite(v));
}

TEST_CASE("deeper than L_max or longer than T is an error") {
  EpochSnapshot s;
  s.layers.resize(3);
  CHECK_THROWS_AS(assemble_feature_matrix({s}, 4, 2), Error);
  std::vector<EpochSnapshot> many(5);
  for (auto& m : many) m.layers.resize(1);
  CHECK_THROWS_AS(assemble_feature_matrix(many, 4, 2), Error);
  CHECK_THROWS_AS(assemble_feature_matrix({}, 4, 2), Error);
}

TEST_CASE("padding neutrality: appending a zero epoch then truncating is exact") {
  std::vector<EpochSnapshot> snaps(2);
  for (int e = 0; e < 2; ++e) {
    snaps[e].loss = 0.5 * (e + 1);
    snaps[e].layers.resize(1);
    snaps[e].layers[0].weight_norm = 1.5;
  }
  const FeatureMatrix a = assemble_feature_matrix(snaps, 4, 2);
  std::vector<EpochSnapshot> extended = snaps;
  EpochSnapshot zero;
  zero.layers.resize(1);
  extended.push_back(zero);
  const FeatureMatrix b = assemble_feature_matrix(extended, 4, 2);
  CHECK(a.values == b.values);
}

TEST_CASE("trace csv round-trips bit-exactly") {
  std::vector<EpochSnapshot> snaps(2);
  RngStream s = Rng(35).stream();
  for (auto& snap : snaps) {
    snap.loss = s.normal(0, 1);
    snap.accuracy = s.uniform();
    snap.data_min = -s.uniform();
    snap.data_max = s.uniform();
    snap.layers.resize(2);
    snap.layers[0].weights.mean = s.normal(0, 1e-7);
    snap.layers[1].grads.skew = s.normal(0, 1e7);
  }
  const FeatureMatrix fm = assemble_feature_matrix(snaps, 3, 3);
  const auto path = (std::filesystem::temp_directory_path() / "d4d_trace_test.csv").string();
  write_trace_csv(path, fm, 3);
  const FeatureMatrix back = read_trace_csv(path);
  CHECK(back.rows == fm.rows);
  CHECK(back.cols == fm.cols);
  CHECK(back.values == fm.values);
  std::filesystem::remove(path);
  CHECK(feature_column_names(3).size() == fm.cols);
  CHECK(feature_column_names(3)[4] == "L1_M_W");
  CHECK(feature_column_names(3)[5] == "L1_Mi_W");
}
