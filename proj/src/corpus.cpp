#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "d4d/error.hpp"
#include "d4d/graph_export.hpp"
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

struct TraceResult {
  FeatureMatrix fm;
  GraphDoc graph;
};

TraceResult run_instrumented(ModelConfig mc, const TaskData& task, int T, int l_max,
                             const ProbeConfig& pc, std::uint64_t trace_seed) {
  mc.train.seed = trace_seed;
  Network net(mc.spec, mc.train.seed);
  const auto [dmin, dmax] = dataset_range(task.train);
  Instrument inst(pc, dmin, dmax);
  train(net, task.train, mc.train, &inst);
  TraceResult r;
  r.fm = assemble_feature_matrix(inst.snapshots(), T, l_max);
  r.graph = export_graph(mc.spec);
  return r;
}

std::array<int, 3> largest_remainder(int n, const std::array<double, 3>& ratios) {
  std::array<int, 3> out{};
  std::array<double, 3> frac{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = n * ratios[i];
    out[i] = static_cast<int>(exact);
    frac[i] = exact - out[i];
    assigned += out[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (frac[i] > frac[best]) best = i;
    }
    ++out[best];
    frac[best] = -1.0;
    ++assigned;
  }
  return out;
}

std::string labels_key(const std::vector<int>& labels) {
  std::string s;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(labels[i]);
  }
  return s;
}

const char* kSplitNames[3] = {"train", "val", "test"};

// Stratified largest-remainder split with a deterministic repair pass that
// pins the global sizes to the largest-remainder quotas of the total count.
void assign_splits(std::vector<CorpusRecordMeta>& records, const std::array<double, 3>& ratios,
                   const Rng& rng) {
  const int n = static_cast<int>(records.size());
  const std::array<int, 3> quota = largest_remainder(n, ratios);

  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i)
    strata[labels_key(records[i].labels)].push_back(i);

  // per-stratum assignment
  std::array<std::vector<std::pair<std::string, std::size_t>>, 3> members;  // (key, rec idx)
  for (auto& [key, idx] : strata) {
    const auto perm = shuffled_indices(idx.size(), rng.child("split").child(key).stream());
    const auto sq = largest_remainder(static_cast<int>(idx.size()), ratios);
    std::size_t pos = 0;
    for (int split = 0; split < 3; ++split) {
      for (int k = 0; k < sq[split]; ++k, ++pos) {
        const std::size_t rec = idx[perm[pos]];
        records[rec].split = kSplitNames[split];
        members[split].emplace_back(key, rec);
      }
    }
  }

  // repair to the exact global quotas
  auto totals = [&] {
    std::array<int, 3> t{};
    for (int s = 0; s < 3; ++s) t[s] = static_cast<int>(members[s].size());
    return t;
  };
  for (std::array<int, 3> t = totals(); t != quota; t = totals()) {
    int from = -1, to = -1;
    for (int s = 0; s < 3; ++s) {
      if (t[s] > quota[s] && from < 0) from = s;
      if (t[s] < quota[s] && to < 0) to = s;
    }
    // move the record whose stratum is most over-represented in `from`
    std::map<std::string, int> count_in_from;
    for (const auto& [key, rec] : members[from]) ++count_in_from[key];
    std::size_t pick = 0;
    int best_count = -1;
    std::string best_key;
    for (std::size_t i = 0; i < members[from].size(); ++i) {
      const auto& [key, rec] = members[from][i];
      const int c = count_in_from[key];
      if (c > best_count || (c == best_count && key < best_key)) {
        best_count = c;
        best_key = key;
        pick = i;
      }
    }
    const auto moved = members[from][pick];
    members[from].erase(members[from].begin() + static_cast<std::ptrdiff_t>(pick));
    members[to].push_back(moved);
    records[moved.second].split = kSplitNames[to];
  }
}

struct RecordPlan {
  std::string id;
  std::size_t seed_index = 0;
  ModelConfig model;
  std::vector<int> labels;
  bool killed = false;
  double p_value = 1.0, effect_size = 0.0;
};

std::string dedup_id(std::set<std::string>& used, std::string id) {
  if (used.insert(id).second) return id;
  int k = 2;
  while (!used.insert(id + "-" + std::to_string(k)).second) ++k;
  return id + "-" + std::to_string(k);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << text;
  if (!out) throw Error("write failed for " + path);
}

}  // namespace

CorpusBuildResult build_corpus(const ExperimentConfig& cfg, const std::string& out_dir) {
  validate_experiment_config(cfg);
  fs::create_directories(fs::path(out_dir) / "traces");
  fs::create_directories(fs::path(out_dir) / "tokens");
  fs::create_directories(fs::path(out_dir) / "graphs");

  CorpusBuildResult result;
  const Rng root(cfg.global_seed);

  struct SeedCtx {
    SeedEntry entry;
    TaskData task;
    std::vector<double> baseline;
  };
  std::vector<SeedCtx> seeds(cfg.seeds.size());

  // Baselines: each seed model retrained kill_runs times; the mean must
  // clear the accuracy floor before any mutation happens.
  auto t0 = Clock::now();
  parallel_for(cfg.seeds.size(), cfg.jobs, [&](std::size_t i) {
    SeedCtx& ctx = seeds[i];
    ctx.entry = cfg.seeds[i];
    ctx.entry.model.train.seed = root.child("seed_model").child(ctx.entry.id).key();
    ctx.task = make_task(ctx.entry.dataset);
    ctx.baseline = retrain_accuracies(ctx.entry.model, ctx.task, cfg.kill_runs);
  });
  for (const SeedCtx& ctx : seeds) {
    double mean = 0.0;
    for (double a : ctx.baseline) mean += a;
    mean /= static_cast<double>(ctx.baseline.size());
    if (mean < cfg.accuracy_floor)
      throw Error("seed model '" + ctx.entry.id + "' reaches only " + format_double(mean) +
                  " mean test accuracy, below the " + format_double(cfg.accuracy_floor) +
                  " floor; fix the seed before mutating");
  }
  result.timings_sec["baselines"] = seconds_since(t0);

  // Single-fault sweep over every grid point of every seed.
  t0 = Clock::now();
  struct SingleJob {
    std::size_t seed_index;
    MutationOp op;
    bool applicable = false;
    ModelConfig mutated;
    KillVerdict verdict;
    std::string error;
  };
  std::vector<SingleJob> singles;
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    const OperatorGrid& grid =
        seeds[si].entry.grid ? *seeds[si].entry.grid : cfg.default_grid;
    for (const MutationOp& op : grid.ops) {
      SingleJob job;
      job.seed_index = si;
      job.op = op;
      singles.push_back(std::move(job));
    }
  }
  parallel_for(singles.size(), cfg.jobs, [&](std::size_t k) {
    SingleJob& job = singles[k];
    const SeedCtx& ctx = seeds[job.seed_index];
    try {
      job.mutated = apply_operator(ctx.entry.model, job.op, ctx.task.train.size());
      job.applicable = true;
    } catch (const InapplicableError& e) {
      job.error = e.what();
      return;
    }
    const auto accs = retrain_accuracies(job.mutated, ctx.task, cfg.kill_runs);
    job.verdict = verdict_from_accuracies(ctx.baseline, accs, cfg.kill_thresholds);
  });
  for (const SingleJob& job : singles) {
    OperatorSweepStat& stat = result.per_operator[category_name(job.op.category)];
    ++stat.attempted;
    if (!job.applicable) {
      ++stat.skipped;
      std::fprintf(stderr, "skipping inapplicable operator on %s: %s\n",
                   seeds[job.seed_index].entry.id.c_str(), job.error.c_str());
    } else if (job.verdict.killed) {
      ++stat.killed;
    }
  }
  result.timings_sec["single_sweep"] = seconds_since(t0);

  // Multi-fault injection: Cartesian products over unordered pairs of
  // distinct categories, per seed, each combined mutant kill-checked once.
  t0 = Clock::now();
  struct DualJob {
    std::size_t seed_index;
    MutationOp op1, op2;
    bool applicable = false;
    ModelConfig mutated;
    KillVerdict verdict;
  };
  std::vector<DualJob> duals;
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    std::vector<MutationOp> killed_ops;
    for (const SingleJob& job : singles) {
      if (job.seed_index == si && job.applicable && job.verdict.killed)
        killed_ops.push_back(job.op);
    }
    for (auto& [op1, op2] : combine_killed_pairs(killed_ops)) {
      DualJob job;
      job.seed_index = si;
      job.op1 = op1;
      job.op2 = op2;
      duals.push_back(std::move(job));
    }
  }
  parallel_for(duals.size(), cfg.jobs, [&](std::size_t k) {
    DualJob& job = duals[k];
    const SeedCtx& ctx = seeds[job.seed_index];
    try {
      job.mutated = apply_operator(apply_operator(ctx.entry.model, job.op1,
                                                  ctx.task.train.size()),
                                   job.op2, ctx.task.train.size());
      job.applicable = true;
    } catch (const InapplicableError&) {
      return;
    }
    const auto accs = retrain_accuracies(job.mutated, ctx.task, cfg.kill_runs);
    job.verdict = verdict_from_accuracies(ctx.baseline, accs, cfg.kill_thresholds);
  });
  result.timings_sec["dual_sweep"] = seconds_since(t0);

  // Record plan: instrumented correct runs plus every killed mutant.
  std::vector<RecordPlan> plans;
  std::set<std::string> used_ids;
  for (std::size_t si = 0; si < seeds.size(); ++si) {
    for (int r = 0; r < cfg.correct_runs_per_seed; ++r) {
      RecordPlan p;
      p.id = dedup_id(used_ids, seeds[si].entry.id + "_ok" + std::to_string(r));
      p.seed_index = si;
      p.model = seeds[si].entry.model;
      p.labels = {0};
      plans.push_back(std::move(p));
      ++result.correct_count;
    }
  }
  for (const SingleJob& job : singles) {
    if (!job.applicable || !job.verdict.killed) continue;
    RecordPlan p;
    p.id = dedup_id(used_ids, seeds[job.seed_index].entry.id + "_" + job.op.slug());
    p.seed_index = job.seed_index;
    p.model = job.mutated;
    p.labels = {job.op.label()};
    p.killed = true;
    p.p_value = job.verdict.p_value;
    p.effect_size = job.verdict.effect_size;
    plans.push_back(std::move(p));
    ++result.single_count;
  }
  for (const DualJob& job : duals) {
    if (!job.applicable || !job.verdict.killed) continue;
    RecordPlan p;
    p.id = dedup_id(used_ids,
                    seeds[job.seed_index].entry.id + "_" + job.op1.slug() + "+" + job.op2.slug());
    p.seed_index = job.seed_index;
    p.model = job.mutated;
    p.labels = {job.op1.label(), job.op2.label()};
    std::sort(p.labels.begin(), p.labels.end());
    p.killed = true;
    p.p_value = job.verdict.p_value;
    p.effect_size = job.verdict.effect_size;
    plans.push_back(std::move(p));
    ++result.multi_count;
  }
  {
    OperatorSweepStat dual_stat;
    dual_stat.attempted = static_cast<int>(duals.size());
    dual_stat.killed = result.multi_count;
    for (const DualJob& job : duals) {
      if (!job.applicable) ++dual_stat.skipped;
    }
    result.per_operator["Multi_Fault"] = dual_stat;
  }

  // Fresh instrumented training per record; kill-check runs are not reused.
  t0 = Clock::now();
  std::vector<TraceResult> traces(plans.size());
  parallel_for(plans.size(), cfg.jobs, [&](std::size_t k) {
    const RecordPlan& p = plans[k];
    const std::uint64_t trace_seed = root.child("trace").child(p.id).key();
    traces[k] = run_instrumented(p.model, seeds[p.seed_index].task, cfg.T, cfg.l_max, cfg.probe,
                                 trace_seed);
  });
  result.timings_sec["instrumentation"] = seconds_since(t0);

  // Manifest order: sorted by id. Keep trace order aligned.
  t0 = Clock::now();
  std::vector<std::size_t> order(plans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return plans[a].id < plans[b].id; });

  std::vector<CorpusRecordMeta> records;
  records.reserve(plans.size());
  for (std::size_t i : order) {
    const RecordPlan& p = plans[i];
    CorpusRecordMeta m;
    m.id = p.id;
    m.seed_id = seeds[p.seed_index].entry.id;
    m.labels = p.labels;
    m.killed = p.killed;
    m.p_value = p.p_value;
    m.effect_size = p.effect_size;
    records.push_back(std::move(m));
  }
  assign_splits(records, cfg.split, root);

  // Vocabulary fits on the training split only, in manifest order.
  std::vector<GraphDoc> train_docs;
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].split == "train") train_docs.push_back(traces[order[r]].graph);
  }
  if (train_docs.empty()) throw Error("build_corpus: empty training split");
  const Vocab vocab = fit_vocabulary(train_docs);
  result.vocab_hash = vocab.hash();

  int S = cfg.S;
  if (S == 0) {
    std::size_t longest = 0;
    for (const TraceResult& t : traces) longest = std::max(longest, token_stream(t.graph).size());
    S = static_cast<int>(longest);
  }
  result.S = S;

  for (std::size_t r = 0; r < records.size(); ++r) {
    const CorpusRecordMeta& m = records[r];
    const TraceResult& t = traces[order[r]];
    write_trace_csv((fs::path(out_dir) / "traces" / (m.id + ".csv")).string(), t.fm, cfg.l_max);
    write_text_file((fs::path(out_dir) / "graphs" / (m.id + ".json")).string(),
                    graph_to_json(t.graph));
    const std::vector<int> ids = encode_and_pad(t.graph, vocab, S);
    write_text_file((fs::path(out_dir) / "tokens" / (m.id + ".json")).string(),
                    json(ids).dump());
  }
  write_text_file((fs::path(out_dir) / "vocab.json").string(), vocab.to_json());

  std::string manifest = "mutant_id,seed_id,labels,killed,p_value,effect_size,split\n";
  for (const CorpusRecordMeta& m : records) {
    manifest += m.id + "," + m.seed_id + "," + labels_key(m.labels) + "," +
                (m.killed ? "true" : "false") + "," + format_double(m.p_value) + "," +
                format_double(m.effect_size) + "," + m.split + "\n";
  }
  write_text_file((fs::path(out_dir) / "manifest.csv").string(), manifest);

  json build;
  build["global_seed"] = cfg.global_seed;
  build["T"] = cfg.T;
  build["L_max"] = cfg.l_max;
  build["S"] = S;
  build["vocab_hash"] = result.vocab_hash;
  build["counts"] = {{"correct", result.correct_count},
                     {"single", result.single_count},
                     {"multi", result.multi_count}};
  json per_op = json::object();
  for (const auto& [name, stat] : result.per_operator) {
    per_op[name] = {{"attempted", stat.attempted}, {"killed", stat.killed},
                    {"skipped", stat.skipped}};
  }
  build["per_operator"] = std::move(per_op);
  write_text_file((fs::path(out_dir) / "build.json").string(), build.dump(2));
  result.timings_sec["write"] = seconds_since(t0);

  result.records = std::move(records);
  return result;
}

LoadedCorpus load_corpus(const std::string& dir) {
  LoadedCorpus corpus;
  const fs::path base(dir);
  std::ifstream manifest(base / "manifest.csv");
  if (!manifest) throw Error("load_corpus: cannot open " + (base / "manifest.csv").string());

  std::ifstream vocab_in(base / "vocab.json");
  if (!vocab_in) throw Error("load_corpus: cannot open " + (base / "vocab.json").string());
  std::string vocab_text((std::istreambuf_iterator<char>(vocab_in)),
                         std::istreambuf_iterator<char>());
  corpus.vocab = Vocab::from_json(vocab_text);

  std::ifstream build_in(base / "build.json");
  if (!build_in) throw Error("load_corpus: cannot open " + (base / "build.json").string());
  json build = json::parse(build_in);
  corpus.T = build.at("T").get<int>();
  corpus.l_max = build.at("L_max").get<int>();
  corpus.S = build.at("S").get<int>();
  corpus.correct_count = build.at("counts").at("correct").get<int>();
  corpus.single_count = build.at("counts").at("single").get<int>();
  corpus.multi_count = build.at("counts").at("multi").get<int>();
  for (auto it = build.at("per_operator").begin(); it != build.at("per_operator").end(); ++it) {
    OperatorSweepStat stat;
    stat.attempted = it.value().at("attempted").get<int>();
    stat.killed = it.value().at("killed").get<int>();
    stat.skipped = it.value().at("skipped").get<int>();
    corpus.per_operator[it.key()] = stat;
  }
  if (build.at("vocab_hash").get<std::uint64_t>() != corpus.vocab.hash())
    throw Error("load_corpus: vocab.json does not match build.json hash");

  std::string line;
  std::getline(manifest, line);  // header
  if (line != "mutant_id,seed_id,labels,killed,p_value,effect_size,split")
    throw Error("load_corpus: unexpected manifest header: " + line);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
      if (i == line.size() || line[i] == ',') {
        cells.push_back(line.substr(start, i - start));
        start = i + 1;
      }
    }
    if (cells.size() != 7) throw Error("load_corpus: malformed manifest row: " + line);
    LoadedRecord rec;
    rec.meta.id = cells[0];
    rec.meta.seed_id = cells[1];
    std::size_t p = 0;
    while (p < cells[2].size()) {
      std::size_t q = cells[2].find(';', p);
      if (q == std::string::npos) q = cells[2].size();
      rec.meta.labels.push_back(std::stoi(cells[2].substr(p, q - p)));
      p = q + 1;
    }
    rec.meta.killed = cells[3] == "true";
    rec.meta.p_value = std::stod(cells[4]);
    rec.meta.effect_size = std::stod(cells[5]);
    rec.meta.split = cells[6];
    rec.trace = read_trace_csv((base / "traces" / (rec.meta.id + ".csv")).string());
    std::ifstream tok_in(base / "tokens" / (rec.meta.id + ".json"));
    if (!tok_in)
      throw Error("load_corpus: missing tokens for " + rec.meta.id);
    json tok = json::parse(tok_in);
    rec.tokens = tok.get<std::vector<int>>();
    corpus.records.push_back(std::move(rec));
  }
  if (corpus.records.empty()) throw Error("load_corpus: empty manifest in " + dir);
  return corpus;
}

std::vector<const LoadedRecord*> LoadedCorpus::split(const std::string& name) const {
  std::vector<const LoadedRecord*> out;
  for (const LoadedRecord& r : records) {
    if (r.meta.split == name) out.push_back(&r);
  }
  return out;
}

}  // namespace d4d
