#pragma once

#include <span>
#include <vector>

#include "d4d/datasets.hpp"
#include "d4d/model_spec.hpp"
#include "d4d/rng.hpp"

namespace d4d {

struct KillVerdict {
  bool killed = false;
  double p_value = 1.0;
  double effect_size = 0.0;
  double mean_acc_orig = 0.0;
  double mean_acc_mut = 0.0;
  int n_runs = 5;
};

// All three must hold for a kill: significance, a non-trivial effect and a
// floor on the raw accuracy drop.
struct KillThresholds {
  double alpha = 0.05;
  double min_effect = 0.5;   // Cohen's d
  double min_drop = 0.05;    // mean accuracy points
};

// One-tailed Welch t-test p-value for H1: mean(b) < mean(a).
double welch_one_tailed_p(std::span<const double> a, std::span<const double> b);
// Cohen's d with pooled standard deviation, sign of (mean(a) - mean(b)).
double cohens_d(std::span<const double> a, std::span<const double> b);

// Trains once (derived run seed), returns final test accuracy. A run whose
// predictions go non-finite counts as accuracy 0.
double train_and_test_accuracy(const ModelConfig& mc, const TaskData& task,
                               std::uint64_t run_seed);

// Accuracy vectors for n_runs retrainings with derived per-run seeds. The
// derivation depends only on (mc.train.seed, run index), so a mutant that
// equals its seed model reproduces the identical accuracy vector.
std::vector<double> retrain_accuracies(const ModelConfig& mc, const TaskData& task, int n_runs);

KillVerdict verdict_from_accuracies(std::span<const double> orig, std::span<const double> mut,
                                    const KillThresholds& thr = {});

// The full check: retrains both models n_runs times and applies the verdict.
KillVerdict is_killed(const ModelConfig& seed_model, const ModelConfig& mutant,
                      const TaskData& task, int n_runs = 5, const KillThresholds& thr = {});

}  // namespace d4d
