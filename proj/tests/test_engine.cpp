#include <doctest.h>

#include <cmath>

#include "d4d/datasets.hpp"
#include "d4d/loss.hpp"
#include "d4d/network.hpp"
#include "d4d/optimizer.hpp"
#include "d4d/train.hpp"

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

}  // namespace

TEST_CASE("zeros initializer produces zero parameters") {
  ModelSpec spec;
  spec.inputs = {{"input", {3}}};
  spec.layers = {dense(4, ActivationKind::Linear, Init{InitKind::Zeros, 0})};
  Network net(spec, 7);
  const auto& w = net.layer(0).params()[0].value;
  const auto& b = net.layer(0).params()[1].value;
  CHECK(w.shape == std::vector<std::size_t>{3, 4});
  CHECK(b.shape == std::vector<std::size_t>{4});
  for (double v : w.data) CHECK(v == 0.0);
  for (double v : b.data) CHECK(v == 0.0);
}

TEST_CASE("same spec and seed build identical parameters") {
  ModelSpec spec;
  spec.inputs = {{"input", {5}}};
  spec.layers = {dense(6, ActivationKind::Relu), dense(2, ActivationKind::Softmax)};
  Network a(spec, 123), b(spec, 123), c(spec, 124);
  bool all_equal = true, differs_from_c = false;
  for (std::size_t i = 0; i < a.layer_count(); ++i) {
    for (std::size_t p = 0; p < a.layer(i).params().size(); ++p) {
      if (a.layer(i).params()[p].value.data != b.layer(i).params()[p].value.data)
        all_equal = false;
      if (a.layer(i).params()[p].value.data != c.layer(i).params()[p].value.data)
        differs_from_c = true;
    }
  }
  CHECK(all_equal);
  CHECK(differs_from_c);
}

TEST_CASE("shape inconsistency names the offending layer") {
  ModelSpec spec;
  spec.inputs = {{"input", {4, 4, 1}}};
  LayerSpec f;
  f.kind = LayerKind::Flatten;
  LayerSpec c;
  c.kind = LayerKind::Conv2D;
  c.filters = 2;
  c.kernel = {2, 2};
  spec.layers = {f, c};
  try {
    Network net(spec, 1);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layer 1") != std::string::npos);
    CHECK(msg.find("rank-3") != std::string::npos);
  }
}

TEST_CASE("identity dense passes input through") {
  ModelSpec spec;
  spec.inputs = {{"input", {3}}};
  spec.layers = {dense(3, ActivationKind::Linear, Init{InitKind::Zeros, 0})};
  Network net(spec, 2);
  Tensor& w = net.layer(0).params()[0].value;
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0;
  Tensor x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  net.forward({x}, false, Rng(0));
  CHECK(net.output().data == x.data);
}

TEST_CASE("softmax rows sum to one") {
  ModelSpec spec;
  spec.inputs = {{"input", {4}}};
  spec.layers = {dense(5, ActivationKind::Softmax)};
  Network net(spec, 3);
  Tensor x = Tensor::zeros({6, 4});
  RngStream s = Rng(10).stream();
  for (double& v : x.data) v = s.normal(0, 3.0);
  net.forward({x}, false, Rng(0));
  const Tensor& out = net.output();
  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 5; ++c) sum += out[r * 5 + c];
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("dropout is inert in eval mode") {
  ModelSpec with, without;
  with.inputs = without.inputs = {{"input", {4}}};
  LayerSpec dr;
  dr.kind = LayerKind::Dropout;
  dr.rate = 0.5;
  with.layers = {dense(6, ActivationKind::Relu), dr, dense(2, ActivationKind::Linear)};
  without.layers = {dense(6, ActivationKind::Relu), dense(2, ActivationKind::Linear)};
  Network a(with, 11), b(without, 11);
  // same init streams per layer index except the dropout layer holds no params;
  // copy parameters across to compare the forward paths directly
  b.layer(0).params()[0].value = a.layer(0).params()[0].value;
  b.layer(0).params()[1].value = a.layer(0).params()[1].value;
  b.layer(1).params()[0].value = a.layer(2).params()[0].value;
  b.layer(1).params()[1].value = a.layer(2).params()[1].value;
  Tensor x = Tensor::from({2, 4}, {1, -2, 3, 0.5, 0, 1, -1, 2});
  a.forward({x}, /*training=*/false, Rng(42));
  b.forward({x}, /*training=*/false, Rng(43));
  for (std::size_t i = 0; i < a.output().numel(); ++i)
    CHECK(a.output()[i] == doctest::Approx(b.output()[i]).epsilon(1e-15));
}

TEST_CASE("non-finite input is rejected with the batch index") {
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(2, ActivationKind::Linear)};
  Network net(spec, 1);
  Tensor x = Tensor::from({3, 2}, {1, 2, 3, std::nan(""), 5, 6});
  try {
    net.forward({x}, false, Rng(0));
    FAIL("expected rejection");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("batch index 1") != std::string::npos);
  }
}

TEST_CASE("constant batch through batchnorm stays finite") {
  ModelSpec spec;
  spec.inputs = {{"input", {3}}};
  LayerSpec bn;
  bn.kind = LayerKind::BatchNorm;
  spec.layers = {bn};
  Network net(spec, 1);
  Tensor x = Tensor::full({4, 3}, 2.5);
  net.forward({x}, true, Rng(0));
  CHECK(net.output().all_finite());
  for (double v : net.output().data) CHECK(std::fabs(v) <= 1e-9);
}

TEST_CASE("sgd step and clip-by-value") {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  ParamBlock p;
  p.value = Tensor::from({1}, {1.0});
  p.grad = Tensor::from({1}, {0.5});
  auto opt = Optimizer::make(cfg);
  std::vector<ParamBlock*> params{&p};
  CHECK(opt->step(params));
  CHECK(p.value[0] == doctest::Approx(0.95).epsilon(1e-12));

  TrainConfig clipped = cfg;
  clipped.gradient_clip = 1.0;
  ParamBlock q;
  q.value = Tensor::from({2}, {0.0, 0.0});
  q.grad = Tensor::from({2}, {3.0, -2.0});
  auto opt2 = Optimizer::make(clipped);
  std::vector<ParamBlock*> qs{&q};
  opt2->step(qs);
  CHECK(q.grad[0] == doctest::Approx(1.0));   // clipped in place
  CHECK(q.grad[1] == doctest::Approx(-1.0));
  CHECK(q.value[0] == doctest::Approx(-0.1));
  CHECK(q.value[1] == doctest::Approx(0.1));
}

TEST_CASE("adam first step matches the hand-evaluated recurrence") {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = 0.001;
  ParamBlock p;
  p.value = Tensor::from({1}, {1.0});
  p.grad = Tensor::from({1}, {0.1});
  auto opt = Optimizer::make(cfg);
  std::vector<ParamBlock*> params{&p};
  opt->step(params);
  // t=1: mhat = g, vhat = g^2, step = lr * g / (|g| + eps) ~= lr
  const double expected = 1.0 - 0.001 * 0.1 / (std::sqrt(0.01) + 1e-8);
  CHECK(p.value[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(1.0 - p.value[0] == doctest::Approx(0.001).epsilon(1e-6));
}

TEST_CASE("non-finite updates propagate and are reported") {
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 1.0;
  ParamBlock p;
  p.value = Tensor::from({1}, {1.0});
  p.grad = Tensor::from({1}, {std::numeric_limits<double>::infinity()});
  auto opt = Optimizer::make(cfg);
  std::vector<ParamBlock*> params{&p};
  CHECK_FALSE(opt->step(params));
  const bool nonfinite = std::isinf(p.value[0]) || std::isnan(p.value[0]);
  CHECK(nonfinite);
}

TEST_CASE("one full-batch epoch takes exactly one optimizer step") {
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(2, ActivationKind::Softmax)};
  TaskData task = make_blobs(20, 10, 2, 0.4, Rng(5));
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 0.1;
  cfg.batch_size = 20;
  cfg.epochs = 1;
  cfg.seed = 9;

  struct Counter : TrainObserver {
    int batches = 0;
    void on_batch_end(int, int, Network&, const Tensor&, double, std::size_t, std::size_t,
                      bool) override {
      ++batches;
    }
  } counter;
  Network net(spec, 9);
  train(net, task.train, cfg, &counter);
  CHECK(counter.batches == 1);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  TaskData task = make_blobs(60, 30, 3, 0.5, Rng(6));
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(8, ActivationKind::Relu), dense(3, ActivationKind::Softmax)};
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 16;
  cfg.epochs = 6;
  cfg.seed = 77;

  Network n1(spec, cfg.seed), n2(spec, cfg.seed);
  const TrainHistory h1 = train(n1, task.train, cfg);
  const TrainHistory h2 = train(n2, task.train, cfg);
  CHECK(h1.loss == h2.loss);  // bit-identical
  CHECK(h1.accuracy == h2.accuracy);
  for (std::size_t i = 0; i < n1.layer_count(); ++i) {
    for (std::size_t p = 0; p < n1.layer(i).params().size(); ++p) {
      CHECK(n1.layer(i).params()[p].value.data == n2.layer(i).params()[p].value.data);
    }
  }
}

TEST_CASE("separable blobs train to high accuracy") {
  TaskData task = make_blobs(120, 60, 2, 0.5, Rng(8));
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(8, ActivationKind::Relu), dense(2, ActivationKind::Softmax)};
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 16;
  cfg.epochs = 20;
  cfg.seed = 21;
  Network net(spec, cfg.seed);
  train(net, task.train, cfg);
  Tensor pred = predict(net, task.test.inputs);
  CHECK(accuracy(pred, task.test.targets) >= 0.95);
}

TEST_CASE("divergence does not abort training") {
  TaskData task = make_blobs(30, 10, 2, 0.5, Rng(12));
  ModelSpec spec;
  spec.inputs = {{"input", {2}}};
  spec.layers = {dense(8, ActivationKind::Relu),
                 dense(2, ActivationKind::Softmax, Init{InitKind::Normal, 50.0})};
  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.learning_rate = 1e6;
  cfg.batch_size = 10;
  cfg.epochs = 8;
  cfg.seed = 4;
  Network net(spec, cfg.seed);
  const TrainHistory h = train(net, task.train, cfg);
  CHECK(h.loss.size() == 8);  // ran to completion regardless of blow-ups
}
