#include "d4d/localizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "d4d/error.hpp"
#include "d4d/loss.hpp"

using nlohmann::json;

namespace d4d {

json classifier_spec_to_json(const ClassifierSpec& s) {
  json j;
  j["h1"] = s.h1;
  j["h2"] = s.h2;
  j["h3"] = s.h3;
  j["h4"] = s.h4;
  j["embed_dim"] = s.embed_dim;
  j["td_units"] = s.td_units;
  j["dropout"] = s.dropout;
  j["K"] = s.K;
  j["num_classes"] = s.num_classes;
  j["vocab_size"] = s.vocab_size;
  j["T"] = s.T;
  j["feature_cols"] = s.feature_cols;
  j["S"] = s.S;
  return j;
}

ClassifierSpec classifier_spec_from_json(const json& j) {
  ClassifierSpec s;
  s.h1 = j.at("h1").get<int>();
  s.h2 = j.at("h2").get<int>();
  s.h3 = j.at("h3").get<int>();
  s.h4 = j.at("h4").get<int>();
  s.embed_dim = j.at("embed_dim").get<int>();
  s.td_units = j.at("td_units").get<int>();
  s.dropout = j.at("dropout").get<double>();
  s.K = j.at("K").get<int>();
  s.num_classes = j.at("num_classes").get<int>();
  s.vocab_size = j.at("vocab_size").get<int>();
  s.T = j.at("T").get<int>();
  s.feature_cols = j.at("feature_cols").get<int>();
  s.S = j.at("S").get<int>();
  return s;
}

ModelSpec classifier_model_spec(const ClassifierSpec& s) {
  if (s.vocab_size < 2 || s.feature_cols < 1 || s.S < 1 || s.T < 1)
    throw Error("classifier spec is not bound to a corpus (vocab/T/S/feature_cols)");
  ModelSpec m;
  m.inputs.push_back({"numeric", {static_cast<std::size_t>(s.T),
                                  static_cast<std::size_t>(s.feature_cols)}});
  m.inputs.push_back({"tokens", {static_cast<std::size_t>(s.S)}});

  auto lstm = [](int units, bool seq) {
    LayerSpec l;
    l.kind = LayerKind::Lstm;
    l.units = units;
    l.return_sequences = seq;
    return l;
  };

  // numeric encoder
  LayerSpec bn;
  bn.kind = LayerKind::BatchNorm;
  bn.name = "bn_numeric";
  bn.from = {"numeric"};
  m.layers.push_back(bn);
  LayerSpec e1a = lstm(s.h1, true);
  e1a.name = "enc_num_lstm1";
  m.layers.push_back(e1a);
  LayerSpec e1b = lstm(s.h2, false);
  e1b.name = "enc_num_lstm2";
  m.layers.push_back(e1b);

  // token encoder
  LayerSpec emb;
  emb.kind = LayerKind::Embedding;
  emb.vocab_size = s.vocab_size;
  emb.embed_dim = s.embed_dim;
  emb.init = Init{InitKind::Normal, 0.05};
  emb.name = "tok_embedding";
  emb.from = {"tokens"};
  m.layers.push_back(emb);
  LayerSpec e2a = lstm(s.h1, true);
  e2a.name = "enc_tok_lstm1";
  m.layers.push_back(e2a);
  LayerSpec e2b = lstm(s.h2, false);
  e2b.name = "enc_tok_lstm2";
  m.layers.push_back(e2b);

  // fused decoder
  LayerSpec cat;
  cat.kind = LayerKind::Concatenate;
  cat.name = "fuse_concat";
  cat.from = {"enc_num_lstm2", "enc_tok_lstm2"};
  m.layers.push_back(cat);
  LayerSpec drop;
  drop.kind = LayerKind::Dropout;
  drop.rate = s.dropout;
  drop.name = "fuse_dropout";
  m.layers.push_back(drop);
  LayerSpec flat;
  flat.kind = LayerKind::Flatten;
  flat.name = "fuse_flatten";
  m.layers.push_back(flat);
  LayerSpec rep;
  rep.kind = LayerKind::RepeatVector;
  rep.repeat = s.K;
  rep.name = "dec_repeat";
  m.layers.push_back(rep);
  LayerSpec d1 = lstm(s.h3, true);
  d1.name = "dec_lstm1";
  m.layers.push_back(d1);
  LayerSpec td1;
  td1.kind = LayerKind::TimeDistributedDense;
  td1.units = s.td_units;
  td1.activation = ActivationKind::Tanh;
  td1.name = "dec_td1";
  m.layers.push_back(td1);
  LayerSpec d2 = lstm(s.h4, true);
  d2.name = "dec_lstm2";
  m.layers.push_back(d2);
  LayerSpec td2;
  td2.kind = LayerKind::TimeDistributedDense;
  td2.units = s.num_classes;
  td2.activation = ActivationKind::Softmax;
  td2.name = "dec_out";
  m.layers.push_back(td2);
  return m;
}

LabelSeq label_seq_from_labels(const std::vector<int>& fault_labels) {
  std::vector<int> nonzero;
  for (int l : fault_labels) {
    if (l != 0) nonzero.push_back(l);
  }
  std::sort(nonzero.begin(), nonzero.end());
  if (nonzero.size() > 2) throw Error("label sequence supports at most two faults");
  LabelSeq seq{0, 0};
  for (std::size_t i = 0; i < nonzero.size(); ++i) seq[i] = nonzero[i];
  return seq;
}

ClassifierData assemble_classifier_data(const std::vector<FeatureMatrix>& traces,
                                        const std::vector<std::vector<int>>& token_seqs,
                                        const std::vector<LabelSeq>& labels,
                                        const ClassifierSpec& spec) {
  const std::size_t n = traces.size();
  if (token_seqs.size() != n || labels.size() != n)
    throw Error("assemble_classifier_data: input counts disagree");
  if (n == 0) throw Error("assemble_classifier_data: empty corpus");
  ClassifierData d;
  d.numeric = Tensor::zeros({n, static_cast<std::size_t>(spec.T),
                             static_cast<std::size_t>(spec.feature_cols)});
  d.tokens = Tensor::zeros({n, static_cast<std::size_t>(spec.S)});
  d.targets = Tensor::zeros({n, static_cast<std::size_t>(spec.K),
                             static_cast<std::size_t>(spec.num_classes)});
  d.labels = labels;
  const std::size_t tf = static_cast<std::size_t>(spec.T) * spec.feature_cols;
  for (std::size_t i = 0; i < n; ++i) {
    const FeatureMatrix& fm = traces[i];
    if (fm.rows != static_cast<std::size_t>(spec.T) ||
        fm.cols != static_cast<std::size_t>(spec.feature_cols))
      throw Error("assemble_classifier_data: trace " + std::to_string(i) + " is " +
                  std::to_string(fm.rows) + "x" + std::to_string(fm.cols) + ", expected " +
                  std::to_string(spec.T) + "x" + std::to_string(spec.feature_cols));
    std::copy(fm.values.begin(), fm.values.end(), d.numeric.data.begin() + i * tf);
    if (token_seqs[i].size() != static_cast<std::size_t>(spec.S))
      throw Error("assemble_classifier_data: token sequence " + std::to_string(i) +
                  " length mismatch");
    for (int k = 0; k < spec.S; ++k)
      d.tokens[i * spec.S + k] = static_cast<double>(token_seqs[i][static_cast<std::size_t>(k)]);
    for (int k = 0; k < spec.K; ++k) {
      const int cls = labels[i][static_cast<std::size_t>(k)];
      if (cls < 0 || cls >= spec.num_classes)
        throw Error("assemble_classifier_data: label out of range");
      d.targets[(i * spec.K + k) * spec.num_classes + cls] = 1.0;
    }
  }
  return d;
}

std::vector<int> decode_step_argmaxes(const std::vector<int>& argmaxes) {
  std::set<int> s(argmaxes.begin(), argmaxes.end());
  s.erase(0);
  if (s.empty()) return {0};
  return std::vector<int>(s.begin(), s.end());
}

ScoreMetrics score_predictions(const std::vector<LabelSeq>& predicted,
                               const std::vector<LabelSeq>& truth) {
  if (predicted.size() != truth.size() || predicted.empty())
    throw Error("score_predictions: empty or mismatched inputs");
  std::size_t step_hits = 0, steps = 0;
  std::size_t tp = 0, pred_nonzero = 0, true_nonzero = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    for (std::size_t k = 0; k < predicted[i].size(); ++k) {
      ++steps;
      if (predicted[i][k] == truth[i][k]) ++step_hits;
    }
    std::set<int> p(predicted[i].begin(), predicted[i].end());
    std::set<int> t(truth[i].begin(), truth[i].end());
    p.erase(0);
    t.erase(0);
    pred_nonzero += p.size();
    true_nonzero += t.size();
    for (int c : p) {
      if (t.count(c)) ++tp;
    }
  }
  ScoreMetrics m;
  m.accuracy = static_cast<double>(step_hits) / static_cast<double>(steps);
  m.precision = pred_nonzero == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred_nonzero);
  m.recall = true_nonzero == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(true_nonzero);
  return m;
}

FaultClassifier::FaultClassifier(ClassifierSpec spec, std::uint64_t seed)
    : spec_(spec), seed_(seed) {
  net_ = std::make_unique<Network>(classifier_model_spec(spec_), seed_);
}

void FaultClassifier::fit_normalizer(const Tensor& numeric_train) {
  const std::size_t f = static_cast<std::size_t>(spec_.feature_cols);
  const std::size_t rows = numeric_train.numel() / f;
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = numeric_train.data.data() + r * f;
    for (std::size_t j = 0; j < f; ++j) mean[j] += x[j];
  }
  for (std::size_t j = 0; j < f; ++j) mean[j] /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = numeric_train.data.data() + r * f;
    for (std::size_t j = 0; j < f; ++j) {
      const double d = x[j] - mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < f; ++j) var[j] /= static_cast<double>(rows);
  net_->layer(0).freeze_statistics(mean, var);
}

namespace {

std::vector<LabelSeq> argmax_steps(const Tensor& out, int k_steps, int classes) {
  const std::size_t n = out.shape[0];
  std::vector<LabelSeq> seqs(n, LabelSeq{0, 0});
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < k_steps; ++k) {
      const double* p = out.data.data() + (i * k_steps + k) * classes;
      int best = 0;
      for (int c = 1; c < classes; ++c) {
        if (p[c] > p[best]) best = c;
      }
      seqs[i][static_cast<std::size_t>(k)] = best;
    }
  }
  return seqs;
}

// Accumulates training-pass predictions for per-epoch metrics.
class FitObserver : public TrainObserver {
 public:
  FitObserver(int k, int classes) : k_(k), classes_(classes) {}

  void on_epoch_start(int, Network&) override {
    pred_.clear();
    truth_.clear();
  }

  void on_batch_end(int, int, Network& net, const Tensor& targets, double, std::size_t,
                    std::size_t, bool) override {
    const auto batch_pred = argmax_steps(net.output(), k_, classes_);
    const auto batch_true = argmax_steps(targets, k_, classes_);
    pred_.insert(pred_.end(), batch_pred.begin(), batch_pred.end());
    truth_.insert(truth_.end(), batch_true.begin(), batch_true.end());
  }

  ScoreMetrics epoch_metrics() const { return score_predictions(pred_, truth_); }

 private:
  int k_, classes_;
  std::vector<LabelSeq> pred_, truth_;
};

}  // namespace

std::vector<FitEpoch> FaultClassifier::fit(const ClassifierData& train_data,
                                           const ClassifierData& val_data,
                                           const FitOptions& opt) {
  if (train_data.size() == 0) throw Error("fit: empty training data");
  {
    // degenerate corpora still train, but flag it
    std::set<LabelSeq> distinct(train_data.labels.begin(), train_data.labels.end());
    if (distinct.size() < 2)
      std::fputs("warning: training corpus has a single label sequence\n", stderr);
  }
  fit_normalizer(train_data.numeric);

  Dataset ds;
  ds.inputs = {train_data.numeric, train_data.tokens};
  ds.targets = train_data.targets;

  TrainConfig cfg;
  cfg.loss = LossKind::CategoricalCrossentropy;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.learning_rate = opt.learning_rate;
  cfg.batch_size = opt.batch_size;
  cfg.epochs = 1;  // driven epoch by epoch below to interleave validation
  cfg.gradient_clip = opt.clip > 0 ? std::optional<double>(opt.clip) : std::nullopt;

  std::vector<FitEpoch> history;
  FitObserver obs(spec_.K, spec_.num_classes);
  // One engine call per epoch, with per-epoch derived seeds, so shuffle and
  // dropout streams stay independent of the validation passes.
  const Rng root(opt.seed);
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    cfg.seed = root.child("fit_epoch").child(static_cast<std::uint64_t>(epoch)).key();
    TrainHistory h = train(*net_, ds, cfg, &obs);
    FitEpoch fe;
    fe.loss = h.loss[0];
    fe.train = obs.epoch_metrics();
    if (val_data.size() > 0) {
      const auto val_pred = predict_step_labels(val_data);
      fe.val = score_predictions(val_pred, val_data.labels);
    }
    history.push_back(fe);
  }
  return history;
}

std::vector<LabelSeq> FaultClassifier::predict_step_labels(const ClassifierData& data) {
  Tensor out = d4d::predict(*net_, {data.numeric, data.tokens});
  return argmax_steps(out, spec_.K, spec_.num_classes);
}

Diagnosis FaultClassifier::predict(const FeatureMatrix& fm, const std::vector<int>& token_seq) {
  if (fm.rows != static_cast<std::size_t>(spec_.T) ||
      fm.cols != static_cast<std::size_t>(spec_.feature_cols))
    throw Error("predict: trace shape " + std::to_string(fm.rows) + "x" +
                std::to_string(fm.cols) + " does not match the classifier (" +
                std::to_string(spec_.T) + "x" + std::to_string(spec_.feature_cols) + ")");
  if (token_seq.size() != static_cast<std::size_t>(spec_.S))
    throw Error("predict: token sequence length " + std::to_string(token_seq.size()) +
                " does not match S=" + std::to_string(spec_.S));
  Tensor numeric = Tensor::zeros({1, static_cast<std::size_t>(spec_.T),
                                  static_cast<std::size_t>(spec_.feature_cols)});
  std::copy(fm.values.begin(), fm.values.end(), numeric.data.begin());
  Tensor tokens = Tensor::zeros({1, static_cast<std::size_t>(spec_.S)});
  for (int k = 0; k < spec_.S; ++k)
    tokens[static_cast<std::size_t>(k)] = static_cast<double>(token_seq[static_cast<std::size_t>(k)]);
  Tensor out = d4d::predict(*net_, {numeric, tokens});

  Diagnosis diag;
  diag.class_max_prob.assign(static_cast<std::size_t>(spec_.num_classes), 0.0);
  std::vector<int> arg;
  for (int k = 0; k < spec_.K; ++k) {
    const double* p = out.data.data() + static_cast<std::size_t>(k) * spec_.num_classes;
    diag.step_probs.emplace_back(p, p + spec_.num_classes);
    int best = 0;
    for (int c = 0; c < spec_.num_classes; ++c) {
      if (p[c] > diag.class_max_prob[static_cast<std::size_t>(c)])
        diag.class_max_prob[static_cast<std::size_t>(c)] = p[c];
      if (p[c] > p[best]) best = c;
    }
    arg.push_back(best);
  }
  diag.decoded = decode_step_argmaxes(arg);
  return diag;
}

}  // namespace d4d
