#include "d4d/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "d4d/error.hpp"
#include "d4d/pipeline.hpp"
#include "d4d/spec_json.hpp"
#include "d4d/trace_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace d4d {

namespace {

constexpr std::uint64_t kDefaultSeed = 42;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string checkpoint_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> jobs;
};

ExperimentConfig load_config_with_overrides(const CommonFlags& f) {
  ExperimentConfig cfg = load_experiment_config(f.config_path);
  if (f.seed) cfg.global_seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.runs) cfg.classifier.runs = *f.runs;
  return cfg;
}

int run_gen_corpus(const CommonFlags& f) {
  const ExperimentConfig cfg = load_config_with_overrides(f);
  const CorpusBuildResult result = build_corpus(cfg, f.out_dir);
  std::printf("corpus written to %s\n", f.out_dir.c_str());
  std::printf("  records: %zu (%d correct, %d single-fault, %d multi-fault)\n",
              result.records.size(), result.correct_count, result.single_count,
              result.multi_count);
  std::printf("  token length S=%d, vocab hash %llu\n", result.S,
              static_cast<unsigned long long>(result.vocab_hash));
  for (const auto& [name, sec] : result.timings_sec)
    std::printf("  %-18s %.1fs\n", name.c_str(), sec);
  return 0;
}

int run_train(const CommonFlags& f, const std::string& corpus_dir) {
  const ExperimentConfig cfg = load_config_with_overrides(f);
  const LoadedCorpus corpus = load_corpus(corpus_dir);
  const Report report = run_experiment(cfg, corpus, f.out_dir);
  std::fputs(report_to_text(report).c_str(), stdout);
  std::printf("checkpoints written to %s (best run %d -> checkpoint.d4d)\n", f.out_dir.c_str(),
              report.best_run);
  return 0;
}

int run_eval(const CommonFlags& f, const std::string& corpus_dir) {
  const LoadedCorpus corpus = load_corpus(corpus_dir);
  const Report report = evaluate_checkpoint(f.checkpoint_path, corpus, f.out_dir);
  std::fputs(report_to_text(report).c_str(), stdout);
  return 0;
}

int run_diagnose(const CommonFlags& f, const std::string& model_path, int runs) {
  std::ifstream in(model_path);
  if (!in) throw Error("cannot open model file: " + model_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("model file " + model_path + " is not valid JSON: " + e.what());
  }
  const ModelConfig target = model_config_from_json(j);
  if (!j.contains("dataset"))
    throw Error("model file " + model_path + " needs a \"dataset\" descriptor for diagnosis");
  const DatasetDesc dataset = dataset_desc_from_json(j.at("dataset"));
  const std::uint64_t seed = f.seed ? *f.seed : kDefaultSeed;
  const DiagnosisReport rep = diagnose(target, dataset, f.checkpoint_path, seed, runs);
  std::fputs(rep.text.c_str(), stdout);
  if (!f.out_dir.empty()) {
    fs::create_directories(f.out_dir);
    std::ofstream out(fs::path(f.out_dir) / "diagnosis.txt");
    out << rep.text;
  }
  return 0;
}

int run_inspect_trace(const std::string& trace_path) {
  const FeatureMatrix fm = read_trace_csv(trace_path);
  const std::size_t per_layer = kLayerBlockColumns;
  if (fm.cols < kGlobalColumns || (fm.cols - kGlobalColumns) % per_layer != 0)
    throw Error("trace " + trace_path + " has unexpected width " + std::to_string(fm.cols));
  const int l_max = static_cast<int>((fm.cols - kGlobalColumns) / per_layer);
  const auto names = feature_column_names(l_max);
  std::printf("%s: %zu epochs x %zu columns (%d layer slots)\n", trace_path.c_str(), fm.rows,
              fm.cols, l_max);
  std::printf("%6s %12s %8s %10s %10s\n", "epoch", "LS", "AC", "DR_min", "DR_max");
  for (std::size_t r = 0; r < fm.rows; ++r) {
    std::printf("%6zu %12.5g %8.4f %10.4g %10.4g\n", r + 1, fm.at(r, 0), fm.at(r, 1), fm.at(r, 2),
                fm.at(r, 3));
  }
  // full named dump of the last epoch that has any nonzero entry
  std::size_t last = 0;
  for (std::size_t r = 0; r < fm.rows; ++r) {
    for (std::size_t c = 0; c < fm.cols; ++c) {
      if (fm.at(r, c) != 0.0) last = r;
    }
  }
  std::printf("\ncolumns at epoch %zu:\n", last + 1);
  for (std::size_t c = 0; c < fm.cols; ++c) {
    std::printf("  %-12s %s\n", names[c].c_str(), format_double(fm.at(last, c)).c_str());
  }
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"data-driven fault localization workbench for small neural networks"};
  app.require_subcommand(1);

  CommonFlags flags;
  std::string corpus_dir, model_path, trace_path;
  int diag_runs = 5;

  CLI::App* gen = app.add_subcommand("gen-corpus", "generate a labeled mutant corpus");
  gen->add_option("--config", flags.config_path, "experiment config JSON")->required();
  gen->add_option("--out", flags.out_dir, "output corpus directory")->required();
  gen->add_option("--seed", flags.seed, "global seed (overrides the config)")
      ->envname("D4D_SEED");
  gen->add_option("--jobs", flags.jobs, "parallel corpus jobs");

  CLI::App* train_cmd = app.add_subcommand("train", "train the fault classifier on a corpus");
  train_cmd->add_option("--config", flags.config_path, "experiment config JSON")->required();
  train_cmd->add_option("--out", flags.out_dir, "output directory for checkpoints + report")
      ->required();
  train_cmd->add_option("--seed", flags.seed, "global seed (overrides the config)")
      ->envname("D4D_SEED");
  train_cmd->add_option("--runs", flags.runs, "number of training runs");
  train_cmd->add_option("--jobs", flags.jobs, "parallel training runs");
  train_cmd->add_option("corpus", corpus_dir, "corpus directory")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  eval_cmd->add_option("--checkpoint", flags.checkpoint_path, "classifier checkpoint")->required();
  eval_cmd->add_option("--out", flags.out_dir, "output directory for the report")->required();
  eval_cmd->add_option("corpus", corpus_dir, "corpus directory")->required();

  CLI::App* diag = app.add_subcommand("diagnose", "diagnose a model+dataset JSON");
  diag->add_option("--checkpoint", flags.checkpoint_path, "classifier checkpoint")->required();
  diag->add_option("--seed", flags.seed, "diagnosis seed")->envname("D4D_SEED");
  diag->add_option("--runs", diag_runs, "instrumented training runs to vote over");
  diag->add_option("--out", flags.out_dir, "optional output directory");
  diag->add_option("model", model_path, "model JSON with train config and dataset")->required();

  CLI::App* inspect = app.add_subcommand("inspect-trace", "pretty-print a trace CSV");
  inspect->add_option("trace", trace_path, "trace CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::puts(app.help().c_str());
    return 0;
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    std::fputs(app.help().c_str(), stderr);
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen_corpus(flags);
    if (train_cmd->parsed()) return run_train(flags, corpus_dir);
    if (eval_cmd->parsed()) return run_eval(flags, corpus_dir);
    if (diag->parsed()) return run_diagnose(flags, model_path, diag_runs);
    if (inspect->parsed()) return run_inspect_trace(trace_path);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}

}  // namespace d4d
