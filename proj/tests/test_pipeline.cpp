#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "d4d/pipeline.hpp"
#include "d4d/spec_json.hpp"

namespace fs = std::filesystem;
using namespace d4d;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("experiment config round-trips through json") {
  const ExperimentConfig cfg = mini_config();
  const auto j = experiment_config_to_json(cfg);
  const ExperimentConfig back = experiment_config_from_json(j);
  CHECK(back.global_seed == cfg.global_seed);
  CHECK(back.T == cfg.T);
  CHECK(back.seeds.size() == cfg.seeds.size());
  CHECK(back.seeds[0].model == cfg.seeds[0].model);
  CHECK(back.seeds[0].grid->ops == cfg.seeds[0].grid->ops);
  CHECK(experiment_config_to_json(back) == j);
}

TEST_CASE("config validation rejects broken setups") {
  ExperimentConfig cfg = mini_config();
  cfg.split = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(validate_experiment_config(cfg), Error);
  cfg = mini_config();
  cfg.seeds[0].model.train.epochs = cfg.T + 1;
  CHECK_THROWS_AS(validate_experiment_config(cfg), Error);
  cfg = mini_config();
  cfg.seeds.clear();
  CHECK_THROWS_AS(validate_experiment_config(cfg), Error);
}

TEST_CASE("mini corpus: reconciliation, splits, determinism, experiment") {
  ExperimentConfig cfg = mini_config();
  cfg.jobs = 2;
  const fs::path dir = fresh_dir("d4d_mini_corpus");
  const CorpusBuildResult result = build_corpus(cfg, dir.string());

  // manifest rows match the trace/token/graph files on disk exactly
  std::set<std::string> ids;
  for (const auto& rec : result.records) ids.insert(rec.id);
  CHECK(ids.size() == result.records.size());
  std::size_t trace_files = 0;
  for (const auto& e : fs::directory_iterator(dir / "traces")) {
    ++trace_files;
    const std::string stem = e.path().stem().string();
    CHECK(ids.count(stem) == 1);
    CHECK(fs::exists(dir / "tokens" / (stem + ".json")));
    CHECK(fs::exists(dir / "graphs" / (stem + ".json")));
  }
  CHECK(trace_files == result.records.size());
  CHECK(result.correct_count == 2 * cfg.correct_runs_per_seed * 0 +
                                    cfg.correct_runs_per_seed * static_cast<int>(cfg.seeds.size()));

  // split sizes within one record of the ratios
  int n_train = 0, n_val = 0, n_test = 0;
  for (const auto& rec : result.records) {
    if (rec.split == "train") ++n_train;
    else if (rec.split == "val") ++n_val;
    else if (rec.split == "test") ++n_test;
  }
  const int n = static_cast<int>(result.records.size());
  CHECK(n_train + n_val + n_test == n);
  CHECK(std::abs(n_train - 0.70 * n) <= 1.0);
  CHECK(std::abs(n_val - 0.15 * n) <= 1.0);
  CHECK(std::abs(n_test - 0.15 * n) <= 1.0);

  // identical global seed reproduces the manifest byte for byte; a different
  // jobs count must not change anything
  const fs::path dir2 = fresh_dir("d4d_mini_corpus2");
  ExperimentConfig cfg2 = mini_config();
  cfg2.jobs = 1;
  build_corpus(cfg2, dir2.string());
  CHECK(slurp(dir / "manifest.csv") == slurp(dir2 / "manifest.csv"));
  CHECK(slurp(dir / "vocab.json") == slurp(dir2 / "vocab.json"));
  CHECK(slurp(dir / "build.json") == slurp(dir2 / "build.json"));

  // loading reconstructs every record
  const LoadedCorpus corpus = load_corpus(dir.string());
  CHECK(corpus.records.size() == result.records.size());
  CHECK(corpus.T == cfg.T);
  CHECK(corpus.S == result.S);
  CHECK(!corpus.split("train").empty());

  // train + evaluate end to end at smoke scale
  const fs::path run_dir = fresh_dir("d4d_mini_run");
  const Report report = run_experiment(cfg, corpus, run_dir.string());
  CHECK(report.runs == cfg.classifier.runs);
  CHECK(fs::exists(run_dir / "checkpoint.d4d"));
  CHECK(fs::exists(run_dir / "report.json"));
  CHECK(report.correct == corpus.correct_count);
  CHECK(report.single == corpus.single_count);
  CHECK(report.multi == corpus.multi_count);

  const Report eval_report =
      evaluate_checkpoint((run_dir / "checkpoint.d4d").string(), corpus,
                          (run_dir / "eval").string());
  CHECK(eval_report.runs == 1);
  CHECK(eval_report.test.mean.accuracy >= 0.0);

  // diagnosis runs end to end against the trained checkpoint
  const SeedEntry& seed0 = cfg.seeds[0];
  const DiagnosisReport diag = diagnose(seed0.model, seed0.dataset,
                                        (run_dir / "checkpoint.d4d").string(), 99, 2);
  CHECK(diag.runs.size() == 2);
  CHECK(!diag.majority_decoded.empty());
  CHECK(!diag.text.empty());

  fs::remove_all(dir);
  fs::remove_all(dir2);
  fs::remove_all(run_dir);
}

TEST_CASE("no mutant id appears in two splits and correct rows are unkilled") {
  ExperimentConfig cfg = mini_config();
  const fs::path dir = fresh_dir("d4d_mini_corpus3");
  const CorpusBuildResult result = build_corpus(cfg, dir.string());
  std::set<std::string> seen;
  for (const auto& rec : result.records) {
    CHECK(seen.insert(rec.id).second);
    CHECK((rec.split == "train" || rec.split == "val" || rec.split == "test"));
    if (rec.labels == std::vector<int>{0}) {
      CHECK_FALSE(rec.killed);
    } else {
      CHECK(rec.killed);
      for (int l : rec.labels) {
        CHECK(l >= 1);
        CHECK(l <= 10);
      }
    }
  }
  fs::remove_all(dir);
}
