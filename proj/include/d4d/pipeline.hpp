#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "d4d/checkpoint.hpp"
#include "d4d/datasets.hpp"
#include "d4d/kill.hpp"
#include "d4d/localizer.hpp"
#include "d4d/mutation.hpp"
#include "d4d/probe.hpp"

namespace d4d {

struct ClassifierHyper {
  int h1 = 64, h2 = 64, h3 = 64, h4 = 64;
  int embed_dim = 32, td_units = 64;
  double dropout = 0.3;
  int K = 2;
  int epochs = 40, batch_size = 16;
  double lr = 1e-3, clip = 5.0;
  int runs = 5;
};

struct SeedEntry {
  std::string id;
  DatasetDesc dataset;
  ModelConfig model;
  std::optional<OperatorGrid> grid;  // falls back to the default grid
};

struct ExperimentConfig {
  std::uint64_t global_seed = 42;
  int T = 40, l_max = 8, S = 0;  // S == 0: size to the longest token stream
  std::array<double, 3> split{0.70, 0.15, 0.15};
  int correct_runs_per_seed = 10;
  int kill_runs = 5;
  double accuracy_floor = 0.65;
  KillThresholds kill_thresholds{};
  ProbeConfig probe{};
  ClassifierHyper classifier{};
  OperatorGrid default_grid;
  std::vector<SeedEntry> seeds;
  int jobs = 1;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);
void validate_experiment_config(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// Corpus

struct CorpusRecordMeta {
  std::string id;
  std::string seed_id;
  std::vector<int> labels;  // {0} for a correct model, otherwise sorted op labels
  bool killed = false;
  double p_value = 1.0;
  double effect_size = 0.0;
  std::string split;  // train | val | test
};

struct OperatorSweepStat {
  int attempted = 0, killed = 0, skipped = 0;
};

struct CorpusBuildResult {
  std::vector<CorpusRecordMeta> records;  // manifest order (sorted by id)
  std::map<std::string, OperatorSweepStat> per_operator;
  int correct_count = 0, single_count = 0, multi_count = 0;
  int S = 0;
  std::uint64_t vocab_hash = 0;
  std::map<std::string, double> timings_sec;  // never written into the corpus
};

CorpusBuildResult build_corpus(const ExperimentConfig& cfg, const std::string& out_dir);

struct LoadedRecord {
  CorpusRecordMeta meta;
  FeatureMatrix trace;
  std::vector<int> tokens;
};

struct LoadedCorpus {
  std::vector<LoadedRecord> records;
  Vocab vocab;
  int T = 0, l_max = 0, S = 0;
  std::map<std::string, OperatorSweepStat> per_operator;
  int correct_count = 0, single_count = 0, multi_count = 0;

  std::vector<const LoadedRecord*> split(const std::string& name) const;
};

LoadedCorpus load_corpus(const std::string& dir);

// ---------------------------------------------------------------------------
// Experiment & diagnosis

struct StageMetrics {
  ScoreMetrics mean;
  ScoreMetrics stddev;
};

struct Report {
  int correct = 0, single = 0, multi = 0;
  std::map<std::string, OperatorSweepStat> kill_rates;
  int runs = 0;
  StageMetrics train, val, test;
  std::vector<double> per_run_test_accuracy;
  double majority_baseline = 0.0;  // most frequent step label on the test split
  std::vector<std::vector<int>> confusion;  // [true][pred] over test steps, best run
  int best_run = 0;
  std::map<std::string, double> timings_sec;
};

// Published full-scale reference for the 8-operator configuration, reported
// alongside desk-scale results for context (not a target).
inline constexpr int kReferenceOperators = 8;
inline constexpr double kReferencePrecision = 0.8683;
inline constexpr double kReferenceRecall = 0.7916;
inline constexpr double kReferenceAccuracy = 0.9415;

nlohmann::json report_to_json(const Report& r);
std::string report_to_text(const Report& r);

// Trains `runs` classifiers with derived seeds on the corpus splits, writes
// ckpt_run<i>.d4d plus checkpoint.d4d (best validation accuracy) and the
// report files into out_dir.
Report run_experiment(const ExperimentConfig& cfg, const LoadedCorpus& corpus,
                      const std::string& out_dir);

// Loads a checkpoint and evaluates it on a corpus without training.
Report evaluate_checkpoint(const std::string& checkpoint_path, const LoadedCorpus& corpus,
                           const std::string& out_dir);

struct DiagnosisRun {
  Diagnosis diagnosis;
  bool nonfinite_training = false;
};

struct DiagnosisReport {
  std::vector<DiagnosisRun> runs;
  std::vector<int> majority_decoded;  // most frequent decoded set across runs
  std::string text;
};

// Trains the target once per run with instrumentation (derived seeds),
// extracts features and predicts. The model JSON must carry a "dataset"
// descriptor alongside the spec and train config.
DiagnosisReport diagnose(const ModelConfig& target, const DatasetDesc& dataset,
                         const std::string& checkpoint_path, std::uint64_t seed, int runs);

// Bundled desk-scale configuration (three seed models on the generated
// tasks); `quick` shrinks it to a smoke-test size.
ExperimentConfig default_desk_config();
ExperimentConfig mini_config();

}  // namespace d4d
