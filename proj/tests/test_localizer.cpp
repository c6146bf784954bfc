#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "d4d/checkpoint.hpp"
#include "d4d/localizer.hpp"
#include "grad_check.hpp"

using namespace d4d;

namespace {

ClassifierSpec tiny_spec() {
  ClassifierSpec s;
  s.h1 = s.h2 = s.h3 = s.h4 = 6;
  s.embed_dim = 3;
  s.td_units = 6;
  s.dropout = 0.2;
  s.K = 2;
  s.num_classes = 11;
  s.vocab_size = 9;
  s.T = 5;
  s.feature_cols = 7;
  s.S = 6;
  return s;
}

// toy corpus: class pattern is planted directly into the trace values
ClassifierData toy_data(const ClassifierSpec& spec, int n, std::uint64_t seed) {
  std::vector<FeatureMatrix> traces;
  std::vector<std::vector<int>> tokens;
  std::vector<LabelSeq> labels;
  RngStream s = Rng(seed).stream();
  for (int i = 0; i < n; ++i) {
    const int cls = 1 + static_cast<int>(s.below(3));  // classes 1..3
    FeatureMatrix fm;
    fm.rows = static_cast<std::size_t>(spec.T);
    fm.cols = static_cast<std::size_t>(spec.feature_cols);
    fm.values.assign(fm.rows * fm.cols, 0.0);
    for (std::size_t r = 0; r < fm.rows; ++r) {
      for (std::size_t c = 0; c < fm.cols; ++c) {
        fm.at(r, c) = s.normal(0, 0.1) + (c == static_cast<std::size_t>(cls) ? 2.0 : 0.0);
      }
    }
    std::vector<int> tok(static_cast<std::size_t>(spec.S), 0);
    for (int k = 0; k < spec.S - 1; ++k)
      tok[static_cast<std::size_t>(k)] = 2 + static_cast<int>(s.below(6));
    traces.push_back(std::move(fm));
    tokens.push_back(std::move(tok));
    labels.push_back(LabelSeq{cls, 0});
  }
  return assemble_classifier_data(traces, tokens, labels, spec);
}

}  // namespace

TEST_CASE("classifier model has the 14-layer two-encoder shape") {
  const ClassifierSpec spec = tiny_spec();
  const ModelSpec m = classifier_model_spec(spec);
  CHECK(m.inputs.size() == 2);
  CHECK(m.layers.size() == 14);
  FaultClassifier clf(spec, 5);
  CHECK(clf.network().layer(13).out_shape() ==
        std::vector<std::size_t>{2, 11});
}

TEST_CASE("fresh classifier emits normalized rows and is seed-deterministic") {
  const ClassifierSpec spec = tiny_spec();
  FaultClassifier a(spec, 7), b(spec, 7), c(spec, 8);
  const ClassifierData data = toy_data(spec, 3, 90);

  FeatureMatrix fm;
  fm.rows = static_cast<std::size_t>(spec.T);
  fm.cols = static_cast<std::size_t>(spec.feature_cols);
  fm.values.assign(fm.rows * fm.cols, 0.5);
  std::vector<int> tok(static_cast<std::size_t>(spec.S), 2);

  const Diagnosis da = a.predict(fm, tok);
  const Diagnosis db = b.predict(fm, tok);
  const Diagnosis dc = c.predict(fm, tok);
  REQUIRE(da.step_probs.size() == 2);
  for (const auto& row : da.step_probs) {
    double sum = 0.0;
    for (double p : row) sum += p;
    CHECK(std::fabs(sum - 1.0) <= 1e-9);
  }
  CHECK(da.step_probs == db.step_probs);   // same seed, same params
  CHECK(da.step_probs != dc.step_probs);   // different seed
  (void)data;
}

TEST_CASE("full classifier gradient check at tiny widths") {
  ClassifierSpec spec = tiny_spec();
  spec.dropout = 0.3;
  FaultClassifier clf(spec, 11);
  const ClassifierData data = toy_data(spec, 4, 91);
  clf.fit_normalizer(data.numeric);
  Dataset batch;
  batch.inputs = {data.numeric, data.tokens};
  batch.targets = data.targets;
  const auto res =
      gradcheck::check(clf.network(), batch, LossKind::CategoricalCrossentropy, 4, 1234);
  CHECK(res.probes > 0);
  CHECK(res.max_rel_err <= 1e-4);
}

TEST_CASE("label sequence encoding") {
  CHECK(label_seq_from_labels({0}) == LabelSeq{0, 0});
  CHECK(label_seq_from_labels({3}) == LabelSeq{3, 0});
  CHECK(label_seq_from_labels({7, 1}) == LabelSeq{1, 7});
  CHECK_THROWS_AS(label_seq_from_labels({1, 2, 3}), Error);
}

TEST_CASE("decoded set rule: dedup argmaxes, drop zero, fall back to {0}") {
  CHECK(decode_step_argmaxes({0, 0}) == std::vector<int>{0});
  CHECK(decode_step_argmaxes({3, 0}) == std::vector<int>{3});
  CHECK(decode_step_argmaxes({7, 1}) == std::vector<int>{1, 7});
  CHECK(decode_step_argmaxes({4, 4}) == std::vector<int>{4});
}

TEST_CASE("score metrics on pinned cases") {
  // perfect predictions
  std::vector<LabelSeq> truth{{1, 7}, {3, 0}, {0, 0}};
  CHECK(score_predictions(truth, truth).precision == doctest::Approx(1.0));
  CHECK(score_predictions(truth, truth).recall == doctest::Approx(1.0));
  CHECK(score_predictions(truth, truth).accuracy == doctest::Approx(1.0));

  // half-recovered dual fault
  std::vector<LabelSeq> pred{{1, 0}, {3, 0}, {0, 0}};
  const ScoreMetrics m = score_predictions(pred, truth);
  CHECK(m.precision == doctest::Approx(1.0));        // tp=2, predicted nonzero=2
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));     // truth nonzero=3
  CHECK(m.accuracy == doctest::Approx(5.0 / 6.0));

  // all-zero predictions on an all-faulty set
  std::vector<LabelSeq> zeros{{0, 0}, {0, 0}};
  std::vector<LabelSeq> faulty{{2, 0}, {1, 7}};
  const ScoreMetrics z = score_predictions(zeros, faulty);
  CHECK(z.precision == 0.0);
  CHECK(z.recall == 0.0);

  CHECK_THROWS_AS(score_predictions({}, {}), Error);
}

TEST_CASE("small corpus memorization") {
  const ClassifierSpec spec = tiny_spec();
  const ClassifierData data = toy_data(spec, 20, 92);
  FaultClassifier clf(spec, 13);
  FitOptions opt;
  opt.epochs = 60;
  opt.batch_size = 5;
  opt.learning_rate = 5e-3;
  opt.clip = 5.0;
  opt.seed = 13;
  const auto history = clf.fit(data, ClassifierData{}, opt);
  REQUIRE(history.size() == 60);
  CHECK(history.front().loss > history.back().loss);
  const auto pred = clf.predict_step_labels(data);
  const ScoreMetrics m = score_predictions(pred, data.labels);
  CHECK(m.accuracy >= 0.95);
}

TEST_CASE("checkpoint round trip preserves predictions and metadata") {
  const ClassifierSpec spec = tiny_spec();
  const ClassifierData data = toy_data(spec, 6, 93);
  FaultClassifier clf(spec, 17);
  FitOptions opt;
  opt.epochs = 3;
  opt.batch_size = 3;
  opt.seed = 17;
  clf.fit(data, ClassifierData{}, opt);

  GraphDoc doc;
  doc.nodes.push_back({{"x"}, "dense_0", "Gemm", {"h0"}});
  const Vocab vocab = fit_vocabulary({doc});

  const auto path = (std::filesystem::temp_directory_path() / "d4d_ckpt_test.d4d").string();
  save_checkpoint(path, clf, vocab, spec.T, 1, spec.S);
  LoadedCheckpoint lc = load_checkpoint(path);
  CHECK(lc.meta.spec == spec);
  CHECK(lc.meta.vocab.hash() == vocab.hash());
  CHECK(lc.meta.T == spec.T);
  CHECK(lc.meta.S == spec.S);

  FeatureMatrix fm;
  fm.rows = static_cast<std::size_t>(spec.T);
  fm.cols = static_cast<std::size_t>(spec.feature_cols);
  fm.values.assign(fm.rows * fm.cols, 0.25);
  std::vector<int> tok(static_cast<std::size_t>(spec.S), 3);
  const Diagnosis before = clf.predict(fm, tok);
  const Diagnosis after = lc.classifier->predict(fm, tok);
  CHECK(before.step_probs == after.step_probs);
  CHECK(before.decoded == after.decoded);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt checkpoints are rejected with a versioned message") {
  const auto path = (std::filesystem::temp_directory_path() / "d4d_bad_ckpt.d4d").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOTACKPT\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("predict validates shapes against the training-time configuration") {
  const ClassifierSpec spec = tiny_spec();
  FaultClassifier clf(spec, 19);
  FeatureMatrix wrong;
  wrong.rows = 3;
  wrong.cols = 4;
  wrong.values.assign(12, 0.0);
  std::vector<int> tok(static_cast<std::size_t>(spec.S), 2);
  CHECK_THROWS_AS(clf.predict(wrong, tok), Error);
}
