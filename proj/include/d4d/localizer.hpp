#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "d4d/feature_matrix.hpp"
#include "d4d/graph_export.hpp"
#include "d4d/network.hpp"
#include "d4d/train.hpp"

namespace d4d {

// Encoder-decoder fault classifier: a numeric-trace encoder
// (BatchNorm -> LSTM -> LSTM), a token encoder (Embedding -> LSTM -> LSTM),
// and a fused decoder (Concatenate -> Dropout -> Flatten -> RepeatVector(K)
// -> LSTM -> TimeDistributedDense(tanh) -> LSTM -> TimeDistributedDense
// (softmax over the 11 classes)); 14 layers in total.
struct ClassifierSpec {
  int h1 = 64, h2 = 64, h3 = 64, h4 = 64;
  int embed_dim = 32;
  int td_units = 64;
  double dropout = 0.3;
  int K = 2;
  int num_classes = 11;
  // bound to the corpus at build time
  int vocab_size = 0;    // embedding table rows (max id + 1)
  int T = 40;
  int feature_cols = 0;  // 4 + 33 * L_max
  int S = 0;

  bool operator==(const ClassifierSpec&) const = default;
};

nlohmann::json classifier_spec_to_json(const ClassifierSpec& s);
ClassifierSpec classifier_spec_from_json(const nlohmann::json& j);

ModelSpec classifier_model_spec(const ClassifierSpec& s);

// K step labels: a correct model is [0,0], a single fault [c,0], a dual
// fault the ascending pair [c1,c2].
using LabelSeq = std::array<int, 2>;
LabelSeq label_seq_from_labels(const std::vector<int>& fault_labels);

// Assembled classifier dataset.
struct ClassifierData {
  Tensor numeric;  // [N, T, F]
  Tensor tokens;   // [N, S]
  Tensor targets;  // [N, K, 11]
  std::vector<LabelSeq> labels;

  std::size_t size() const { return labels.size(); }
};

ClassifierData assemble_classifier_data(const std::vector<FeatureMatrix>& traces,
                                        const std::vector<std::vector<int>>& token_seqs,
                                        const std::vector<LabelSeq>& labels,
                                        const ClassifierSpec& spec);

struct Diagnosis {
  std::vector<std::vector<double>> step_probs;  // K x num_classes
  std::vector<int> decoded;                     // sorted; {0} when no fault
  std::vector<double> class_max_prob;           // num_classes
};

std::vector<int> decode_step_argmaxes(const std::vector<int>& argmaxes);

struct ScoreMetrics {
  double precision = 0, recall = 0, accuracy = 0;
};

// Micro-averaged precision/recall over non-zero classes plus per-step
// categorical accuracy.
ScoreMetrics score_predictions(const std::vector<LabelSeq>& predicted,
                               const std::vector<LabelSeq>& truth);

struct FitOptions {
  int epochs = 40;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double clip = 5.0;
  std::uint64_t seed = 0;
};

struct FitEpoch {
  double loss = 0;
  ScoreMetrics train;
  ScoreMetrics val;
};

class FaultClassifier {
 public:
  FaultClassifier(ClassifierSpec spec, std::uint64_t seed);

  const ClassifierSpec& spec() const { return spec_; }
  Network& network() { return *net_; }
  const Network& network() const { return *net_; }
  std::uint64_t build_seed() const { return seed_; }

  // Freezes the numeric BatchNorm on per-column statistics of the training
  // split (pooled over records and epochs).
  void fit_normalizer(const Tensor& numeric_train);

  // Adam + categorical cross-entropy averaged over the K steps. Training
  // metrics come from the training passes; validation metrics from an
  // inference pass per epoch.
  std::vector<FitEpoch> fit(const ClassifierData& train_data, const ClassifierData& val_data,
                            const FitOptions& opt);

  Diagnosis predict(const FeatureMatrix& fm, const std::vector<int>& token_seq);
  std::vector<LabelSeq> predict_step_labels(const ClassifierData& data);

 private:
  ClassifierSpec spec_;
  std::uint64_t seed_;
  std::unique_ptr<Network> net_;
};

}  // namespace d4d
