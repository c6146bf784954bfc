#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "d4d/error.hpp"
#include "d4d/jobs.hpp"
#include "d4d/pipeline.hpp"
#include "d4d/spec_json.hpp"
#include "d4d/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace d4d {

namespace {
using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}
}  // namespace

json experiment_config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["global_seed"] = cfg.global_seed;
  j["T"] = cfg.T;
  j["L_max"] = cfg.l_max;
  j["S"] = cfg.S;
  j["split"] = cfg.split;
  j["correct_runs_per_seed"] = cfg.correct_runs_per_seed;
  j["kill_runs"] = cfg.kill_runs;
  j["accuracy_floor"] = cfg.accuracy_floor;
  j["kill_thresholds"] = {{"alpha", cfg.kill_thresholds.alpha},
                          {"min_effect", cfg.kill_thresholds.min_effect},
                          {"min_drop", cfg.kill_thresholds.min_drop}};
  j["probe"] = {{"dead_threshold", cfg.probe.dead_threshold},
                {"sigmoid_sat", {cfg.probe.sigmoid_sat_min, cfg.probe.sigmoid_sat_max}},
                {"tanh_sat", {cfg.probe.tanh_sat_min, cfg.probe.tanh_sat_max}}};
  j["classifier"] = {{"h1", cfg.classifier.h1},       {"h2", cfg.classifier.h2},
                     {"h3", cfg.classifier.h3},       {"h4", cfg.classifier.h4},
                     {"embed_dim", cfg.classifier.embed_dim},
                     {"td_units", cfg.classifier.td_units},
                     {"dropout", cfg.classifier.dropout},
                     {"K", cfg.classifier.K},
                     {"epochs", cfg.classifier.epochs},
                     {"batch_size", cfg.classifier.batch_size},
                     {"lr", cfg.classifier.lr},
                     {"clip", cfg.classifier.clip},
                     {"runs", cfg.classifier.runs}};
  j["default_grid"] = cfg.default_grid.to_json();
  json seeds = json::array();
  for (const SeedEntry& s : cfg.seeds) {
    json js;
    js["id"] = s.id;
    js["dataset"] = dataset_desc_to_json(s.dataset);
    js["model"] = model_config_to_json(s.model);
    if (s.grid) js["grid"] = s.grid->to_json();
    seeds.push_back(std::move(js));
  }
  j["seeds"] = std::move(seeds);
  j["jobs"] = cfg.jobs;
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("global_seed")) cfg.global_seed = j.at("global_seed").get<std::uint64_t>();
  if (j.contains("T")) cfg.T = j.at("T").get<int>();
  if (j.contains("L_max")) cfg.l_max = j.at("L_max").get<int>();
  if (j.contains("S")) cfg.S = j.at("S").get<int>();
  if (j.contains("split")) cfg.split = j.at("split").get<std::array<double, 3>>();
  if (j.contains("correct_runs_per_seed"))
    cfg.correct_runs_per_seed = j.at("correct_runs_per_seed").get<int>();
  if (j.contains("kill_runs")) cfg.kill_runs = j.at("kill_runs").get<int>();
  if (j.contains("accuracy_floor")) cfg.accuracy_floor = j.at("accuracy_floor").get<double>();
  if (j.contains("kill_thresholds")) {
    const json& kt = j.at("kill_thresholds");
    if (kt.contains("alpha")) cfg.kill_thresholds.alpha = kt.at("alpha").get<double>();
    if (kt.contains("min_effect")) cfg.kill_thresholds.min_effect = kt.at("min_effect").get<double>();
    if (kt.contains("min_drop")) cfg.kill_thresholds.min_drop = kt.at("min_drop").get<double>();
  }
  if (j.contains("probe")) {
    const json& p = j.at("probe");
    if (p.contains("dead_threshold")) cfg.probe.dead_threshold = p.at("dead_threshold").get<double>();
    if (p.contains("sigmoid_sat")) {
      cfg.probe.sigmoid_sat_min = p.at("sigmoid_sat")[0].get<double>();
      cfg.probe.sigmoid_sat_max = p.at("sigmoid_sat")[1].get<double>();
    }
    if (p.contains("tanh_sat")) {
      cfg.probe.tanh_sat_min = p.at("tanh_sat")[0].get<double>();
      cfg.probe.tanh_sat_max = p.at("tanh_sat")[1].get<double>();
    }
  }
  if (j.contains("classifier")) {
    const json& c = j.at("classifier");
    auto geti = [&c](const char* k, int d) { return c.contains(k) ? c.at(k).get<int>() : d; };
    auto getd = [&c](const char* k, double d) {
      return c.contains(k) ? c.at(k).get<double>() : d;
    };
    cfg.classifier.h1 = geti("h1", cfg.classifier.h1);
    cfg.classifier.h2 = geti("h2", cfg.classifier.h2);
    cfg.classifier.h3 = geti("h3", cfg.classifier.h3);
    cfg.classifier.h4 = geti("h4", cfg.classifier.h4);
    cfg.classifier.embed_dim = geti("embed_dim", cfg.classifier.embed_dim);
    cfg.classifier.td_units = geti("td_units", cfg.classifier.td_units);
    cfg.classifier.dropout = getd("dropout", cfg.classifier.dropout);
    cfg.classifier.K = geti("K", cfg.classifier.K);
    cfg.classifier.epochs = geti("epochs", cfg.classifier.epochs);
    cfg.classifier.batch_size = geti("batch_size", cfg.classifier.batch_size);
    cfg.classifier.lr = getd("lr", cfg.classifier.lr);
    cfg.classifier.clip = getd("clip", cfg.classifier.clip);
    cfg.classifier.runs = geti("runs", cfg.classifier.runs);
  }
  if (j.contains("default_grid")) cfg.default_grid = OperatorGrid::from_json(j.at("default_grid"));
  if (!j.contains("seeds")) throw Error("experiment config: missing 'seeds'");
  for (const json& js : j.at("seeds")) {
    SeedEntry s;
    s.id = js.at("id").get<std::string>();
    s.dataset = dataset_desc_from_json(js.at("dataset"));
    s.model = model_config_from_json(js.at("model"));
    if (js.contains("grid")) s.grid = OperatorGrid::from_json(js.at("grid"));
    cfg.seeds.push_back(std::move(s));
  }
  if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("config " + path + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = experiment_config_from_json(j);
  validate_experiment_config(cfg);
  return cfg;
}

void validate_experiment_config(const ExperimentConfig& cfg) {
  const double ratio_sum = cfg.split[0] + cfg.split[1] + cfg.split[2];
  if (std::fabs(ratio_sum - 1.0) > 1e-9)
    throw Error("split ratios must sum to 1, got " + format_double(ratio_sum));
  if (cfg.T < 1 || cfg.l_max < 1) throw Error("T and L_max must be >= 1");
  if (cfg.seeds.empty()) throw Error("config needs at least one seed model");
  if (cfg.kill_runs < 2) throw Error("kill_runs must be >= 2");
  for (const SeedEntry& s : cfg.seeds) {
    if (s.id.empty()) throw Error("every seed needs an id");
    if (s.model.train.epochs > cfg.T)
      throw Error("seed '" + s.id + "' trains " + std::to_string(s.model.train.epochs) +
                  " epochs, above T=" + std::to_string(cfg.T));
    if (static_cast<int>(s.model.spec.layers.size()) > cfg.l_max)
      throw Error("seed '" + s.id + "' has " + std::to_string(s.model.spec.layers.size()) +
                  " layers, above L_max=" + std::to_string(cfg.l_max));
    validate_spec_fields(s.model.spec);
  }
}

// ---------------------------------------------------------------------------

namespace {

ClassifierData data_for(const std::vector<const LoadedRecord*>& records,
                        const ClassifierSpec& spec) {
  std::vector<FeatureMatrix> traces;
  std::vector<std::vector<int>> tokens;
  std::vector<LabelSeq> labels;
  for (const LoadedRecord* r : records) {
    traces.push_back(r->trace);
    tokens.push_back(r->tokens);
    labels.push_back(label_seq_from_labels(r->meta.labels));
  }
  return assemble_classifier_data(traces, tokens, labels, spec);
}

ScoreMetrics metrics_on(FaultClassifier& clf, const ClassifierData& data) {
  return score_predictions(clf.predict_step_labels(data), data.labels);
}

StageMetrics aggregate(const std::vector<ScoreMetrics>& per_run) {
  StageMetrics out;
  const double n = static_cast<double>(per_run.size());
  for (const ScoreMetrics& m : per_run) {
    out.mean.precision += m.precision / n;
    out.mean.recall += m.recall / n;
    out.mean.accuracy += m.accuracy / n;
  }
  for (const ScoreMetrics& m : per_run) {
    out.stddev.precision += (m.precision - out.mean.precision) * (m.precision - out.mean.precision) / n;
    out.stddev.recall += (m.recall - out.mean.recall) * (m.recall - out.mean.recall) / n;
    out.stddev.accuracy += (m.accuracy - out.mean.accuracy) * (m.accuracy - out.mean.accuracy) / n;
  }
  out.stddev.precision = std::sqrt(out.stddev.precision);
  out.stddev.recall = std::sqrt(out.stddev.recall);
  out.stddev.accuracy = std::sqrt(out.stddev.accuracy);
  return out;
}

double majority_step_baseline(const ClassifierData& data, int num_classes) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  std::size_t total = 0;
  for (const LabelSeq& seq : data.labels) {
    for (int c : seq) {
      ++counts[static_cast<std::size_t>(c)];
      ++total;
    }
  }
  std::size_t best = 0;
  for (std::size_t c : counts) best = std::max(best, c);
  return total == 0 ? 0.0 : static_cast<double>(best) / static_cast<double>(total);
}

std::vector<std::vector<int>> step_confusion(const std::vector<LabelSeq>& pred,
                                             const std::vector<LabelSeq>& truth,
                                             int num_classes) {
  std::vector<std::vector<int>> c(static_cast<std::size_t>(num_classes),
                                  std::vector<int>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t k = 0; k < pred[i].size(); ++k) {
      c[static_cast<std::size_t>(truth[i][k])][static_cast<std::size_t>(pred[i][k])] += 1;
    }
  }
  return c;
}

ClassifierSpec bind_classifier_spec(const ClassifierHyper& h, const LoadedCorpus& corpus) {
  ClassifierSpec spec;
  spec.h1 = h.h1;
  spec.h2 = h.h2;
  spec.h3 = h.h3;
  spec.h4 = h.h4;
  spec.embed_dim = h.embed_dim;
  spec.td_units = h.td_units;
  spec.dropout = h.dropout;
  spec.K = h.K;
  spec.num_classes = kNumFaultClasses;
  spec.vocab_size = static_cast<int>(corpus.vocab.size()) + 2;  // pad + oov + tokens
  spec.T = corpus.T;
  spec.feature_cols = static_cast<int>(feature_columns(corpus.l_max));
  spec.S = corpus.S;
  return spec;
}

void write_report_files(const Report& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream js(fs::path(out_dir) / "report.json");
  js << report_to_json(report).dump(2) << "\n";
  std::ofstream txt(fs::path(out_dir) / "report.txt");
  txt << report_to_text(report);
}

}  // namespace

Report run_experiment(const ExperimentConfig& cfg, const LoadedCorpus& corpus,
                      const std::string& out_dir) {
  fs::create_directories(out_dir);
  const ClassifierSpec spec = bind_classifier_spec(cfg.classifier, corpus);
  const ClassifierData train_data = data_for(corpus.split("train"), spec);
  const ClassifierData val_data = data_for(corpus.split("val"), spec);
  const ClassifierData test_data = data_for(corpus.split("test"), spec);

  Report report;
  report.correct = corpus.correct_count;
  report.single = corpus.single_count;
  report.multi = corpus.multi_count;
  report.kill_rates = corpus.per_operator;
  report.runs = cfg.classifier.runs;
  report.majority_baseline = majority_step_baseline(test_data, spec.num_classes);

  const Rng root(cfg.global_seed);
  struct RunOutcome {
    ScoreMetrics train, val, test;
    std::vector<LabelSeq> test_pred;
    double final_val_accuracy = 0.0;
  };
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(cfg.classifier.runs));

  const auto t0 = Clock::now();
  parallel_for(outcomes.size(), cfg.jobs, [&](std::size_t r) {
    const std::uint64_t run_seed = root.child("classifier_run").child(r).key();
    FaultClassifier clf(spec, run_seed);
    FitOptions opt;
    opt.epochs = cfg.classifier.epochs;
    opt.batch_size = cfg.classifier.batch_size;
    opt.learning_rate = cfg.classifier.lr;
    opt.clip = cfg.classifier.clip;
    opt.seed = run_seed;
    const auto history = clf.fit(train_data, val_data, opt);
    RunOutcome& out = outcomes[r];
    out.train = history.back().train;
    out.val = history.back().val;
    out.final_val_accuracy = history.back().val.accuracy;
    out.test_pred = clf.predict_step_labels(test_data);
    out.test = score_predictions(out.test_pred, test_data.labels);
    save_checkpoint((fs::path(out_dir) / ("ckpt_run" + std::to_string(r) + ".d4d")).string(),
                    clf, corpus.vocab, corpus.T, corpus.l_max, corpus.S);
  });
  report.timings_sec["classifier_training"] = seconds_since(t0);

  std::vector<ScoreMetrics> train_m, val_m, test_m;
  for (const RunOutcome& o : outcomes) {
    train_m.push_back(o.train);
    val_m.push_back(o.val);
    test_m.push_back(o.test);
    report.per_run_test_accuracy.push_back(o.test.accuracy);
  }
  report.train = aggregate(train_m);
  report.val = aggregate(val_m);
  report.test = aggregate(test_m);

  std::size_t best = 0;
  for (std::size_t r = 1; r < outcomes.size(); ++r) {
    if (outcomes[r].final_val_accuracy > outcomes[best].final_val_accuracy) best = r;
  }
  report.best_run = static_cast<int>(best);
  report.confusion =
      step_confusion(outcomes[best].test_pred, test_data.labels, spec.num_classes);
  fs::copy_file(fs::path(out_dir) / ("ckpt_run" + std::to_string(best) + ".d4d"),
                fs::path(out_dir) / "checkpoint.d4d", fs::copy_options::overwrite_existing);

  write_report_files(report, out_dir);
  return report;
}

Report evaluate_checkpoint(const std::string& checkpoint_path, const LoadedCorpus& corpus,
                           const std::string& out_dir) {
  LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
  if (lc.meta.T != corpus.T || lc.meta.l_max != corpus.l_max || lc.meta.S != corpus.S ||
      lc.meta.vocab.hash() != corpus.vocab.hash())
    throw Error("checkpoint " + checkpoint_path +
                " is incompatible with this corpus (T/L_max/S/vocab mismatch)");
  const ClassifierSpec& spec = lc.meta.spec;
  const ClassifierData train_data = data_for(corpus.split("train"), spec);
  const ClassifierData val_data = data_for(corpus.split("val"), spec);
  const ClassifierData test_data = data_for(corpus.split("test"), spec);

  Report report;
  report.correct = corpus.correct_count;
  report.single = corpus.single_count;
  report.multi = corpus.multi_count;
  report.kill_rates = corpus.per_operator;
  report.runs = 1;
  report.majority_baseline = majority_step_baseline(test_data, spec.num_classes);

  const auto t0 = Clock::now();
  report.train = StageMetrics{metrics_on(*lc.classifier, train_data), {}};
  report.val = StageMetrics{metrics_on(*lc.classifier, val_data), {}};
  const auto test_pred = lc.classifier->predict_step_labels(test_data);
  report.test = StageMetrics{score_predictions(test_pred, test_data.labels), {}};
  report.per_run_test_accuracy.push_back(report.test.mean.accuracy);
  report.confusion = step_confusion(test_pred, test_data.labels, spec.num_classes);
  report.timings_sec["evaluation"] = seconds_since(t0);

  if (!out_dir.empty()) write_report_files(report, out_dir);
  return report;
}

DiagnosisReport diagnose(const ModelConfig& target, const DatasetDesc& dataset,
                         const std::string& checkpoint_path, std::uint64_t seed, int runs) {
  LoadedCheckpoint lc = load_checkpoint(checkpoint_path);
  const TaskData task = make_task(dataset);
  const Rng root(seed);

  DiagnosisReport out;
  const int l_max = lc.meta.l_max;
  if (static_cast<int>(target.spec.layers.size()) > l_max)
    throw Error("target model has " + std::to_string(target.spec.layers.size()) +
                " layers; checkpoint supports at most " + std::to_string(l_max));
  if (target.train.epochs > lc.meta.T)
    throw Error("target trains " + std::to_string(target.train.epochs) +
                " epochs; checkpoint supports at most " + std::to_string(lc.meta.T));

  std::map<std::string, int> decoded_counts;
  for (int r = 0; r < runs; ++r) {
    ModelConfig mc = target;
    mc.train.seed = root.child("diagnose_run").child(static_cast<std::uint64_t>(r)).key();
    Network net(mc.spec, mc.train.seed);
    const auto [dmin, dmax] = dataset_range(task.train);
    ProbeConfig pc;
    Instrument inst(pc, dmin, dmax);
    train(net, task.train, mc.train, &inst);
    DiagnosisRun run;
    for (const EpochSnapshot& s : inst.snapshots()) {
      if (s.nonfinite_update) run.nonfinite_training = true;
    }
    const FeatureMatrix fm = assemble_feature_matrix(inst.snapshots(), lc.meta.T, l_max);
    const GraphDoc graph = export_graph(mc.spec);
    const std::vector<int> tokens = encode_and_pad(graph, lc.meta.vocab, lc.meta.S);
    run.diagnosis = lc.classifier->predict(fm, tokens);
    std::string key;
    for (int c : run.diagnosis.decoded) key += std::to_string(c) + ";";
    ++decoded_counts[key];
    out.runs.push_back(std::move(run));
  }

  std::string best_key;
  int best_count = -1;
  for (const auto& [key, count] : decoded_counts) {
    if (count > best_count) {
      best_count = count;
      best_key = key;
    }
  }
  std::size_t p = 0;
  while (p < best_key.size()) {
    const std::size_t q = best_key.find(';', p);
    out.majority_decoded.push_back(std::stoi(best_key.substr(p, q - p)));
    p = q + 1;
  }

  // human-readable summary, classes ranked by their max probability
  std::string text;
  const Diagnosis& last = out.runs.back().diagnosis;
  std::vector<int> ranked;
  for (int c = 0; c < static_cast<int>(last.class_max_prob.size()); ++c) ranked.push_back(c);
  std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
    return last.class_max_prob[static_cast<std::size_t>(a)] >
           last.class_max_prob[static_cast<std::size_t>(b)];
  });
  if (out.majority_decoded == std::vector<int>{0}) {
    text += "no fault detected (class 0 - " + label_name(0) + ")\n";
  } else {
    text += "detected fault classes (majority over " + std::to_string(runs) + " runs):";
    for (int c : out.majority_decoded) text += " class " + std::to_string(c);
    text += "\n";
  }
  text += "ranked classes (last run, max step probability):\n";
  for (int c : ranked) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "  class %2d - %-30s p=%.4f\n", c, label_name(c).c_str(),
                  last.class_max_prob[static_cast<std::size_t>(c)]);
    text += buf;
  }
  out.text = std::move(text);
  return out;
}

}  // namespace d4d
