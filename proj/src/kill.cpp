#include "d4d/kill.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "d4d/loss.hpp"
#include "d4d/network.hpp"
#include "d4d/train.hpp"

namespace d4d {

namespace {

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sample_var(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double welch_one_tailed_p(std::span<const double> a, std::span<const double> b) {
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double m1 = mean_of(a), m2 = mean_of(b);
  const double v1 = sample_var(a, m1), v2 = sample_var(b, m2);
  const double se2 = v1 / n1 + v2 / n2;
  if (se2 == 0.0) {
    // Degenerate: both samples constant. The direction alone decides.
    return m2 < m1 ? 0.0 : 1.0;
  }
  const double t = (m1 - m2) / std::sqrt(se2);
  double df = se2 * se2 /
              ((v1 / n1) * (v1 / n1) / (n1 - 1.0) + (v2 / n2) * (v2 / n2) / (n2 - 1.0));
  if (!(df > 0.0)) df = n1 + n2 - 2.0;
  boost::math::students_t_distribution<double> dist(df);
  return boost::math::cdf(dist, -t);
}

double cohens_d(std::span<const double> a, std::span<const double> b) {
  const double n1 = static_cast<double>(a.size());
  const double n2 = static_cast<double>(b.size());
  const double m1 = mean_of(a), m2 = mean_of(b);
  const double v1 = sample_var(a, m1), v2 = sample_var(b, m2);
  const double pooled = std::sqrt(((n1 - 1.0) * v1 + (n2 - 1.0) * v2) / (n1 + n2 - 2.0));
  if (pooled == 0.0) {
    if (m1 == m2) return 0.0;
    return m1 > m2 ? std::numeric_limits<double>::infinity()
                   : -std::numeric_limits<double>::infinity();
  }
  return (m1 - m2) / pooled;
}

double train_and_test_accuracy(const ModelConfig& mc, const TaskData& task,
                               std::uint64_t run_seed) {
  ModelConfig run = mc;
  run.train.seed = run_seed;
  Network net(run.spec, run.train.seed);
  train(net, task.train, run.train);
  Tensor pred = predict(net, task.test.inputs);
  if (!pred.all_finite()) return 0.0;
  return accuracy(pred, task.test.targets);
}

std::vector<double> retrain_accuracies(const ModelConfig& mc, const TaskData& task, int n_runs) {
  const Rng base = Rng(mc.train.seed).child("kill_run");
  std::vector<double> accs;
  accs.reserve(n_runs);
  for (int r = 0; r < n_runs; ++r) {
    accs.push_back(train_and_test_accuracy(mc, task, base.child(static_cast<std::uint64_t>(r)).key()));
  }
  return accs;
}

KillVerdict verdict_from_accuracies(std::span<const double> orig, std::span<const double> mut,
                                    const KillThresholds& thr) {
  KillVerdict v;
  v.n_runs = static_cast<int>(mut.size());
  v.mean_acc_orig = mean_of(orig);
  v.mean_acc_mut = mean_of(mut);
  const bool identical = orig.size() == mut.size() &&
                         std::equal(orig.begin(), orig.end(), mut.begin());
  if (identical) {
    // paired identical runs (mutant == seed): no evidence of degradation
    v.p_value = 1.0;
    v.effect_size = 0.0;
    return v;
  }
  v.p_value = welch_one_tailed_p(orig, mut);
  v.effect_size = cohens_d(orig, mut);
  const double drop = v.mean_acc_orig - v.mean_acc_mut;
  v.killed = v.p_value < thr.alpha && v.effect_size >= thr.min_effect && drop >= thr.min_drop;
  return v;
}

KillVerdict is_killed(const ModelConfig& seed_model, const ModelConfig& mutant,
                      const TaskData& task, int n_runs, const KillThresholds& thr) {
  const std::vector<double> orig = retrain_accuracies(seed_model, task, n_runs);
  const std::vector<double> mut = retrain_accuracies(mutant, task, n_runs);
  return verdict_from_accuracies(orig, mut, thr);
}

}  // namespace d4d
