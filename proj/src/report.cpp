#include <cstdio>

#include "d4d/pipeline.hpp"
#include "d4d/trace_io.hpp"

using nlohmann::json;

namespace d4d {

namespace {

json metrics_json(const StageMetrics& m) {
  return {{"precision", m.mean.precision},
          {"recall", m.mean.recall},
          {"accuracy", m.mean.accuracy},
          {"precision_std", m.stddev.precision},
          {"recall_std", m.stddev.recall},
          {"accuracy_std", m.stddev.accuracy}};
}

}  // namespace

json report_to_json(const Report& r) {
  json j;
  j["corpus"] = {{"correct", r.correct}, {"single", r.single}, {"multi", r.multi}};
  json rates = json::object();
  for (const auto& [name, stat] : r.kill_rates) {
    rates[name] = {{"attempted", stat.attempted},
                   {"killed", stat.killed},
                   {"skipped", stat.skipped}};
  }
  j["kill_rates"] = std::move(rates);
  j["classifier"] = {{"runs", r.runs},
                     {"train", metrics_json(r.train)},
                     {"val", metrics_json(r.val)},
                     {"test", metrics_json(r.test)},
                     {"per_run_test_accuracy", r.per_run_test_accuracy},
                     {"majority_baseline", r.majority_baseline},
                     {"best_run", r.best_run}};
  j["confusion"] = r.confusion;
  j["timings_sec"] = r.timings_sec;
  // Published full-scale reference (8 operators); desk-scale numbers are not
  // directly comparable and no match is claimed.
  j["full_scale_reference"] = {{"operators", kReferenceOperators},
                               {"precision", kReferencePrecision},
                               {"recall", kReferenceRecall},
                               {"accuracy", kReferenceAccuracy}};
  return j;
}

std::string report_to_text(const Report& r) {
  std::string s;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "corpus: %d correct, %d single-fault, %d multi-fault records\n",
                r.correct, r.single, r.multi);
  s += buf;
  s += "kill rates per operator (killed/attempted, skipped inapplicable):\n";
  for (const auto& [name, stat] : r.kill_rates) {
    std::snprintf(buf, sizeof(buf), "  %-32s %3d/%-3d (%d skipped)\n", name.c_str(), stat.killed,
                  stat.attempted, stat.skipped);
    s += buf;
  }
  std::snprintf(buf, sizeof(buf), "classifier (%d run%s, mean +/- std):\n", r.runs,
                r.runs == 1 ? "" : "s");
  s += buf;
  auto line = [&](const char* stage, const StageMetrics& m) {
    std::snprintf(buf, sizeof(buf),
                  "  %-6s precision %.4f+/-%.4f  recall %.4f+/-%.4f  accuracy %.4f+/-%.4f\n",
                  stage, m.mean.precision, m.stddev.precision, m.mean.recall, m.stddev.recall,
                  m.mean.accuracy, m.stddev.accuracy);
    s += buf;
  };
  line("train", r.train);
  line("val", r.val);
  line("test", r.test);
  std::snprintf(buf, sizeof(buf), "  majority-class baseline (test, per step): %.4f\n",
                r.majority_baseline);
  s += buf;
  std::snprintf(buf, sizeof(buf),
                "full-scale reference (%d operators): precision %.4f recall %.4f accuracy %.4f "
                "(context only; desk-scale results are not comparable)\n",
                kReferenceOperators, kReferencePrecision, kReferenceRecall, kReferenceAccuracy);
  s += buf;
  s += "timings (seconds):\n";
  for (const auto& [name, sec] : r.timings_sec) {
    std::snprintf(buf, sizeof(buf), "  %-24s %.1f\n", name.c_str(), sec);
    s += buf;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Bundled configurations

namespace {

LayerSpec dense(int units, ActivationKind act) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.units = units;
  l.activation = act;
  return l;
}

LayerSpec conv(int filters, int k, ActivationKind act) {
  LayerSpec l;
  l.kind = LayerKind::Conv2D;
  l.filters = filters;
  l.kernel = {k, k};
  l.activation = act;
  return l;
}

LayerSpec maxpool(int p) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool2D;
  l.pool = {p, p};
  return l;
}

LayerSpec flatten() {
  LayerSpec l;
  l.kind = LayerKind::Flatten;
  return l;
}

LayerSpec dropout(double rate) {
  LayerSpec l;
  l.kind = LayerKind::Dropout;
  l.rate = rate;
  return l;
}

TrainConfig adam_cce(double lr, int batch, int epochs) {
  TrainConfig t;
  t.loss = LossKind::CategoricalCrossentropy;
  t.optimizer = OptimizerKind::Adam;
  t.learning_rate = lr;
  t.batch_size = batch;
  t.epochs = epochs;
  return t;
}

OperatorGrid grid_from(const json& j) { return OperatorGrid::from_json(j); }

}  // namespace

ExperimentConfig default_desk_config() {
  ExperimentConfig cfg;
  cfg.global_seed = 42;
  cfg.T = 40;
  cfg.l_max = 8;
  cfg.S = 0;
  cfg.correct_runs_per_seed = 10;
  cfg.kill_runs = 5;
  cfg.classifier.h1 = cfg.classifier.h2 = cfg.classifier.h3 = cfg.classifier.h4 = 40;
  cfg.classifier.embed_dim = 16;
  cfg.classifier.td_units = 40;
  cfg.classifier.dropout = 0.3;
  cfg.classifier.epochs = 36;
  cfg.classifier.batch_size = 16;
  cfg.classifier.lr = 1e-3;
  cfg.classifier.clip = 5.0;
  cfg.classifier.runs = 5;

  {
    SeedEntry s;
    s.id = "blobs_mlp";
    s.dataset = {"blobs", 200, 100, 3, 0.55, 1101};
    s.model.spec.inputs = {{"input", {2}}};
    s.model.spec.layers = {dense(16, ActivationKind::Relu), dense(16, ActivationKind::None),
                           dense(3, ActivationKind::Softmax)};
    s.model.train = adam_cce(2e-3, 16, 25);
    s.grid = grid_from(json{
        {"change_loss", {"mse", "binary_crossentropy"}},
        {"change_batch_size", {"full"}},
        {"change_learning_rate", {1e-7, 5.0}},
        {"change_activation", {{{"layer", 0}, {"to", "softmax"}}, {{"layer", 0}, {"to", "sigmoid"}}}},
        {"add_activation", {{{"layer", 1}, {"to", "softmax"}}, {{"layer", 1}, {"to", "sigmoid"}}}},
        {"remove_activation", {{{"layer", 2}}, {{"layer", 0}}}},
        {"change_optimizer", {{{"kind", "sgd"}, {"momentum", 0.0}}, {{"kind", "sgd"}, {"momentum", 0.9}}}},
        {"change_gradient_clip", {1e-6}},
        {"change_weights_init", {{{"layer", 0}, {"to", "zeros"}}, {{"layer", 0}, {"to", "normal(3.0)"}}}},
        {"change_dropout_rate", {{{"layer", 1}, {"rate", 0.9}}}},  // no dropout layer: skipped
    });
    cfg.seeds.push_back(std::move(s));
  }
  {
    SeedEntry s;
    s.id = "moons_mlp";
    s.dataset = {"moons", 240, 120, 2, 0.15, 1102};
    s.model.spec.inputs = {{"input", {2}}};
    s.model.spec.layers = {dense(20, ActivationKind::Relu), dense(8, ActivationKind::None),
                           dense(2, ActivationKind::Softmax)};
    s.model.train = adam_cce(2e-3, 16, 30);
    s.grid = grid_from(json{
        {"change_loss", {"mse", "binary_crossentropy"}},
        {"change_batch_size", {"full"}},
        {"change_learning_rate", {1e-7, 5.0}},
        {"change_activation", {{{"layer", 0}, {"to", "softmax"}}, {{"layer", 0}, {"to", "tanh"}}}},
        {"add_activation", {{{"layer", 1}, {"to", "softmax"}}, {{"layer", 1}, {"to", "tanh"}}}},
        {"remove_activation", {{{"layer", 0}}, {{"layer", 2}}}},
        {"change_optimizer", {{{"kind", "sgd"}, {"momentum", 0.0}}, {{"kind", "sgd"}, {"momentum", 0.9}}}},
        {"change_gradient_clip", {1e-6}},
        {"change_weights_init", {{{"layer", 0}, {"to", "zeros"}}, {{"layer", 0}, {"to", "normal(3.0)"}}}},
    });
    cfg.seeds.push_back(std::move(s));
  }
  {
    SeedEntry s;
    s.id = "digits_conv";
    s.dataset = {"digits8x8", 320, 160, 10, 0.12, 1103};
    s.model.spec.inputs = {{"input", {8, 8, 1}}};
    s.model.spec.layers = {conv(8, 3, ActivationKind::Relu),  maxpool(2),
                           conv(16, 2, ActivationKind::Relu), maxpool(2),
                           flatten(),                         dropout(0.25),
                           dense(10, ActivationKind::Softmax)};
    s.model.train = adam_cce(2e-3, 32, 24);
    s.grid = grid_from(json{
        {"change_loss", {"mse", "binary_crossentropy"}},
        {"change_batch_size", {"full"}},
        {"change_learning_rate", {1e-7, 5.0}},
        {"change_activation", {{{"layer", 0}, {"to", "sigmoid"}}, {{"layer", 2}, {"to", "sigmoid"}}}},
        {"remove_activation", {{{"layer", 6}}, {{"layer", 0}}}},
        {"change_optimizer", {{{"kind", "sgd"}, {"momentum", 0.0}}}},
        {"change_gradient_clip", {1e-6}},
        {"change_weights_init", {{{"layer", 0}, {"to", "zeros"}}, {{"layer", 6}, {"to", "normal(4.0)"}}}},
        {"change_dropout_rate", {{{"layer", 5}, {"rate", 0.95}}}},
    });
    cfg.seeds.push_back(std::move(s));
  }
  {
    SeedEntry s;
    s.id = "digits_mlp";
    s.dataset = {"digits8x8", 300, 150, 10, 0.15, 1104};
    s.model.spec.inputs = {{"input", {8, 8, 1}}};
    s.model.spec.layers = {flatten(), dense(32, ActivationKind::Relu),
                           dense(16, ActivationKind::None), dense(10, ActivationKind::Softmax)};
    s.model.train = adam_cce(2e-3, 25, 24);
    s.grid = grid_from(json{
        {"change_loss", {"mse", "binary_crossentropy"}},
        {"change_batch_size", {"full"}},
        {"change_learning_rate", {1e-7, 5.0}},
        {"change_activation", {{{"layer", 1}, {"to", "softmax"}}, {{"layer", 1}, {"to", "sigmoid"}}}},
        {"add_activation", {{{"layer", 2}, {"to", "softmax"}}, {{"layer", 2}, {"to", "sigmoid"}}}},
        {"remove_activation", {{{"layer", 1}}, {{"layer", 3}}}},
        {"change_optimizer", {{{"kind", "sgd"}, {"momentum", 0.0}}, {{"kind", "sgd"}, {"momentum", 0.9}}}},
        {"change_gradient_clip", {1e-6}},
        {"change_weights_init", {{{"layer", 1}, {"to", "zeros"}}, {{"layer", 1}, {"to", "normal(3.0)"}}}},
    });
    cfg.seeds.push_back(std::move(s));
  }
  return cfg;
}

ExperimentConfig mini_config() {
  ExperimentConfig cfg;
  cfg.global_seed = 42;
  cfg.T = 12;
  cfg.l_max = 4;
  cfg.S = 0;
  cfg.correct_runs_per_seed = 2;
  cfg.kill_runs = 3;
  cfg.classifier.h1 = cfg.classifier.h2 = cfg.classifier.h3 = cfg.classifier.h4 = 8;
  cfg.classifier.embed_dim = 4;
  cfg.classifier.td_units = 8;
  cfg.classifier.dropout = 0.1;
  cfg.classifier.epochs = 3;
  cfg.classifier.batch_size = 4;
  cfg.classifier.runs = 2;

  SeedEntry s;
  s.id = "blobs_mini";
  s.dataset = {"blobs", 48, 24, 2, 0.5, 7};
  s.model.spec.inputs = {{"input", {2}}};
  s.model.spec.layers = {dense(8, ActivationKind::Relu), dense(2, ActivationKind::Softmax)};
  s.model.train = adam_cce(5e-3, 8, 10);
  s.grid = grid_from(json{
      {"change_learning_rate", {1e-8, 9.0}},
      {"change_weights_init", {{{"layer", 0}, {"to", "zeros"}}}},
      {"remove_activation", {{{"layer", 1}}}},
  });
  cfg.seeds.push_back(std::move(s));
  return cfg;
}

}  // namespace d4d
