#include "cli.hpp"

#include <cstdio>
#include <iostream>
#include <map>
#include <set>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "run_config.hpp"
#include "sift/corpus.hpp"
#include "sift/error.hpp"
#include "sift/feature_store.hpp"
#include "sift/fingerprint.hpp"
#include "sift/flops.hpp"
#include "sift/io.hpp"
#include "sift/manifest.hpp"
#include "sift/pooling.hpp"
#include "sift/rng.hpp"
#include "sift/scorers.hpp"
#include "sift/selection.hpp"
#include "sift/similarity.hpp"

namespace sift::cli {

namespace fs = std::filesystem;

namespace {

std::string format_g(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

// Stages files in "<dir>.staging" and moves them into place on success.
class StagedDir {
 public:
  StagedDir(fs::path target, bool force) : target_(std::move(target)) {
    if (fs::exists(target_) && !fs::is_empty(target_) && !force) {
      throw ConfigError(target_.string() + " exists and is not empty (use --force)");
    }
    staging_ = target_.string() + ".staging";
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  ~StagedDir() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }
  const fs::path& path() const { return staging_; }
  void commit() {
    if (fs::exists(target_)) fs::remove_all(target_);
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

void require_valid(const ValidationReport& report, const std::string& what) {
  if (report.ok()) return;
  std::string msg = what + " failed validation:";
  for (const auto& f : report.failures) msg += "\n  " + f;
  throw DataError(msg);
}

// ---------------------------------------------------------------------------
// dedup

struct DedupArgs {
  std::string pool, out, report;
};

int cmd_dedup(const DedupArgs& a, std::ostream& out) {
  const DataPool pool = load_pool(a.pool);
  auto [deduped, report] = dedup_pool(pool);
  write_pool(a.out, deduped.samples);

  std::string tsv = "source\tkept\tremoved\n";
  for (const auto& [source, total] : pool.source_histogram) {
    const auto it = report.removed.find(source);
    const std::size_t removed = it == report.removed.end() ? 0 : it->second.size();
    tsv += source + "\t" + std::to_string(total - removed) + "\t" + std::to_string(removed) + "\n";
  }
  write_text_file_atomic(a.report, tsv);
  out << "kept " << deduped.size() << " of " << pool.size() << " samples, removed "
      << report.removed_count() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateArgs {
  std::string pool, features;
  std::vector<std::string> require;
};

RecordType parse_type(const std::string& name) {
  for (std::uint32_t t = 1; t <= 7; ++t) {
    if (record_type_name(static_cast<RecordType>(t)) == name) return static_cast<RecordType>(t);
  }
  throw ConfigError("unknown record type \"" + name + "\"");
}

int cmd_validate(const ValidateArgs& a, std::ostream& out) {
  std::vector<RecordType> required;
  for (const auto& r : a.require) required.push_back(parse_type(r));
  const DataPool pool = load_pool(a.pool);
  const FeatureManifest manifest = load_manifest(a.features);
  const ValidationReport report = validate_store(manifest, pool.size(), pool.fingerprint, required);
  out << report.to_string();
  return report.ok() ? kExitOk : kExitData;
}

// ---------------------------------------------------------------------------
// pool-embeddings

struct PoolEmbeddingsArgs {
  std::string pool, features, out_dir;
  std::string kind = "weighted";
  std::string span = "full";
  std::size_t shard_rows = 65536;
  std::size_t batch = 1024;
  bool force = false;
};

int cmd_pool_embeddings(const PoolEmbeddingsArgs& a, std::ostream& out) {
  const PoolingStrategy strategy{parse_pooling_kind(a.kind), parse_pooling_span(a.span)};
  if (a.shard_rows == 0 || a.batch == 0) throw ConfigError("shard rows and batch must be positive");
  const DataPool pool = load_pool(a.pool);
  const FeatureManifest hidden = load_manifest(a.features);
  require_valid(validate_store(hidden, pool.size(), pool.fingerprint, {RecordType::kHiddenStates}),
                a.features);
  const auto entries = hidden.shards_of(RecordType::kHiddenStates);
  const std::uint32_t dim = entries.front().dim;

  StagedDir staged(a.out_dir, a.force);
  FeatureManifest result;
  result.pool_fingerprint = hidden.pool_fingerprint;
  result.extractor_model = hidden.extractor_model;
  result.max_tokens = hidden.max_tokens;
  result.attributes = {{"pooling_kind", std::string(to_string(strategy.kind))},
                       {"pooling_span", std::string(to_string(strategy.span))},
                       {"hidden_state_manifest", file_fingerprint(a.features)}};

  std::vector<HiddenStateRecord> batch;
  PoolIndex batch_start = 0;
  FloatMatrix shard_rows(0, dim);
  PoolIndex shard_start = 0;

  auto flush_shard = [&] {
    if (shard_rows.rows == 0) return;
    char name[32];
    std::snprintf(name, sizeof(name), "emb-%05zu.bin", result.shards.size());
    write_shard(EmbeddingShard{shard_start, shard_rows}, staged.path() / name);
    result.shards.push_back({name, RecordType::kEmbedding, shard_start, shard_rows.rows, dim});
    shard_start += shard_rows.rows;
    shard_rows = FloatMatrix(0, dim);
  };
  auto flush_batch = [&] {
    if (batch.empty()) return;
    const FloatMatrix pooled = pool_all(batch, strategy, batch_start);
    for (std::size_t i = 0; i < pooled.rows; ++i) {
      shard_rows.data.insert(shard_rows.data.end(), pooled.row(i).begin(), pooled.row(i).end());
      ++shard_rows.rows;
      if (shard_rows.rows == a.shard_rows) flush_shard();
    }
    batch_start += batch.size();
    batch.clear();
  };

  for_each_hidden_state(hidden, [&](PoolIndex, const HiddenStateRecord& r) {
    batch.push_back(r);
    if (batch.size() == a.batch) flush_batch();
  });
  flush_batch();
  flush_shard();
  save_manifest(result, staged.path() / "manifest.json");
  staged.commit();
  out << "pooled " << shard_start << " embeddings (" << to_string(strategy.kind) << "/"
      << to_string(strategy.span) << ", dim " << dim << ") into " << a.out_dir << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// topk

struct TopKArgs {
  std::string queries_features, pool_features, out, jsonl;
  std::size_t k = 0;
  int threads = 0;
  std::size_t block_rows = 512;
};

int cmd_topk(const TopKArgs& a, std::ostream& out) {
  if (a.k == 0) throw ConfigError("topk: --k must be at least 1");
  const EmbeddingStore queries = EmbeddingStore::open(a.queries_features);
  const EmbeddingStore pool = EmbeddingStore::open(a.pool_features);
  const auto lists = cosine_topk(queries.load_all(), pool, a.k, {a.block_rows, a.threads});
  write_topk(lists, a.out);
  if (!a.jsonl.empty()) write_topk_jsonl(lists, a.jsonl);
  out << "wrote " << lists.size() << " top-" << a.k << " lists over " << pool.size()
      << " pool rows to " << a.out << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// score

struct ScoreArgs {
  std::string method, features, pool, out;
};

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const FeatureManifest manifest = load_manifest(a.features);
  if (!a.pool.empty()) {
    const DataPool pool = load_pool(a.pool);
    require_valid(validate_store(manifest, pool.size(), pool.fingerprint, {RecordType::kLoss}),
                  a.features);
  }
  const auto losses = load_loss_records(manifest);
  ScalarScoreTable table;
  if (a.method == "perplexity") table = perplexity_scores(losses);
  else if (a.method == "perplexity_response") table = perplexity_scores(losses, true);
  else if (a.method == "ifd") table = ifd_scores(losses);
  else throw ConfigError("score: unknown method \"" + a.method + "\"");
  write_score_table_tsv(table, a.out + ".tsv");
  write_score_table(table, a.out + ".bin");
  out << "scored " << table.scores.size() << " samples (" << table.excluded.size()
      << " excluded) with " << to_string(table.method) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// select

using ojson = nlohmann::ordered_json;

FloatMatrix load_query_embeddings(const TaskSpec& task, std::size_t expected_rows) {
  const FeatureManifest m = load_manifest(task.features);
  const std::string fp = file_fingerprint(task.queries);
  require_valid(validate_store(m, expected_rows, fp, {RecordType::kEmbedding}),
                "task " + task.id + " query features");
  return EmbeddingStore(m).load_all();
}

SelectionManifest select_query_driven(const RunConfig& c, const DataPool& pool,
                                      const FeatureManifest& pool_features, ojson& params) {
  std::vector<std::pair<std::string, fs::path>> query_paths;
  for (const auto& t : c.tasks) query_paths.emplace_back(t.id, t.queries);
  const auto query_sets = load_query_sets(query_paths);

  const EmbeddingStore store(pool_features);
  const std::size_t k = c.k > 0 ? c.k : std::min(pool.size(), 2 * c.n);
  params["k"] = k;
  params["aggregation"] = c.aggregation == Aggregation::kRoundRobin ? "round_robin" : "mean_max";
  if (c.method == Method::kRds) {
    params["pooling"] = {{"kind", to_string(c.pooling.kind)}, {"span", to_string(c.pooling.span)}};
  }
  const TopKOptions options{512, c.threads};

  std::vector<std::pair<std::string, std::vector<TopKList>>> per_task;
  for (std::size_t t = 0; t < c.tasks.size(); ++t) {
    const FloatMatrix q = load_query_embeddings(c.tasks[t], query_sets[t].queries.size());
    per_task.emplace_back(c.tasks[t].id, cosine_topk(q, store, k, options));
  }

  std::vector<PoolIndex> selected;
  std::vector<std::size_t> contributions;
  std::vector<std::string> warnings;
  if (c.aggregation == Aggregation::kMeanMax) {
    const auto tables = aggregate_task_scores(per_task);
    MeanMaxOptions opt;
    opt.floor = c.mean_max_floor;
    params["mean_max_floor"] = c.mean_max_floor ? ojson(*c.mean_max_floor) : ojson("task_min");
    auto res = mean_max_select(tables, std::min(c.n, pool.size()), opt);
    if (res.approximate) {
      warnings.push_back("mean_max over truncated top-k lists: missing scores replaced by floor "
                         "values; set k to the pool size for exact scores");
    }
    selected = std::move(res.selected);
  } else if (per_task.size() == 1) {
    auto res = round_robin_single(per_task.front().second, c.n);
    selected = std::move(res.selected);
    contributions = {selected.size()};
  } else {
    const auto tables = aggregate_task_scores(per_task);
    auto res = round_robin_multitask(tables, c.n);
    selected = std::move(res.selected);
    contributions = std::move(res.contributions);
  }

  SelectionManifest m = make_manifest(std::string(to_string(c.method)), pool, std::move(selected));
  for (const auto& t : c.tasks) m.task_order.push_back(t.id);
  m.task_contributions = std::move(contributions);
  m.warnings = std::move(warnings);
  return m;
}

int cmd_select(const RunConfig& c, std::ostream& out, std::ostream& err) {
  check_config(c);
  const DataPool pool = load_pool(c.pool);

  ojson params;
  params["n"] = c.n;
  std::optional<FeatureManifest> features;
  std::string features_fp;
  if (!c.pool_features.empty()) {
    features = load_manifest(c.pool_features);
    features_fp = file_fingerprint(c.pool_features);
    std::vector<RecordType> required;
    switch (c.method) {
      case Method::kTopPpl:
      case Method::kMidPpl:
      case Method::kIfd: required = {RecordType::kLoss}; break;
      case Method::kLength:
        required = {features->has(RecordType::kTokenCount) ? RecordType::kTokenCount
                                                           : RecordType::kLoss};
        break;
      case Method::kLess:
      case Method::kEmbedding:
      case Method::kRds: required = {RecordType::kEmbedding}; break;
      default: break;
    }
    require_valid(validate_store(*features, pool.size(), pool.fingerprint, required),
                  c.pool_features.string());
    params["extractor_model"] = features->extractor_model;
  }
  if (c.threads > 0) omp_set_num_threads(c.threads);

  const std::size_t n_capped = std::min(c.n, pool.size());
  SelectionManifest m;
  switch (c.method) {
    case Method::kRandom:
      params["seed"] = c.seed;
      params["generator"] = Rng::kName;
      m = make_manifest("random", pool, random_select(pool.size(), n_capped, c.seed));
      break;
    case Method::kBalancedRandom:
      params["seed"] = c.seed;
      params["generator"] = Rng::kName;
      m = make_manifest("balanced_random", pool, balanced_random_select(pool, n_capped, c.seed));
      break;
    case Method::kLength: {
      std::vector<std::uint32_t> counts;
      if (features->has(RecordType::kTokenCount)) {
        counts = load_token_counts(*features);
      } else {
        for (const auto& r : load_loss_records(*features)) counts.push_back(r.full_token_count);
      }
      m = make_manifest("length", pool, select_length(counts, n_capped));
      break;
    }
    case Method::kTopPpl:
    case Method::kMidPpl: {
      const auto table = perplexity_scores(load_loss_records(*features), c.response_only);
      params["loss"] = c.response_only ? "response" : "full";
      auto picked = c.method == Method::kTopPpl ? select_top_ppl(table, n_capped)
                                                : select_mid_ppl(table, n_capped);
      m = make_manifest(std::string(to_string(c.method)), pool, std::move(picked));
      break;
    }
    case Method::kIfd: {
      const auto table = ifd_scores(load_loss_records(*features));
      params["ifd_filter_ge_one"] = c.ifd_filter;
      params["ifd_excluded"] = table.excluded.size();
      m = make_manifest("ifd", pool, select_ifd(table, n_capped, c.ifd_filter));
      break;
    }
    case Method::kLess:
    case Method::kEmbedding:
    case Method::kRds:
      m = select_query_driven(c, pool, *features, params);
      break;
  }
  m.parameters = std::move(params);
  m.feature_manifest = features_fp;
  check_manifest(m);

  fs::create_directories(c.output);
  save_manifest(m, c.output / "manifest.json");
  if (c.materialize) {
    std::vector<Sample> subset;
    subset.reserve(m.selected.size());
    for (PoolIndex i : m.selected) subset.push_back(pool.samples[i]);
    write_pool(c.output / "subset.jsonl", subset);
  }
  for (const auto& w : m.warnings) err << "warning: " << w << "\n";
  out << "selected " << m.selected.size() << " of " << pool.size() << " samples with "
      << m.method << " -> " << (c.output / "manifest.json").string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// flops / report

struct CostArgs {
  double model_params = 7e9;
  double selector_params = 0;
  std::uint64_t tokens = 2048;
  std::uint64_t epochs = 2;
  std::uint64_t ifd_warmup_pool = 200000;
  std::uint64_t ifd_warmup_train = 1000;
  std::uint64_t less_checkpoints = 3;
};

std::uint64_t as_count(double v, const char* name) {
  if (!(v >= 0) || v > 1.8e19 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
    throw ConfigError(std::string(name) + " must be a non-negative integer");
  }
  return static_cast<std::uint64_t>(v);
}

CostModelParams cost_params(const CostArgs& a) {
  CostModelParams p;
  p.model_params = as_count(a.model_params, "--model-params");
  if (a.selector_params > 0) p.selector_params = as_count(a.selector_params, "--selector-params");
  p.tokens_per_sample = a.tokens;
  p.epochs = a.epochs;
  p.ifd_warmup_pool = a.ifd_warmup_pool;
  p.ifd_warmup_train = a.ifd_warmup_train;
  p.less_checkpoints = a.less_checkpoints;
  return p;
}

void add_cost_options(CLI::App* app, CostArgs& a) {
  app->add_option("--model-params", a.model_params, "Trained model parameter count N");
  app->add_option("--selector-params", a.selector_params, "Selector model size (default N)");
  app->add_option("--tokens", a.tokens, "Tokens per sample");
  app->add_option("--epochs", a.epochs, "Training epochs");
  app->add_option("--ifd-warmup-pool", a.ifd_warmup_pool);
  app->add_option("--ifd-warmup-train", a.ifd_warmup_train);
  app->add_option("--less-checkpoints", a.less_checkpoints);
}

struct FlopsArgs {
  std::vector<std::string> methods;
  double pool_size = 0;
  double selected = 0;
  CostArgs cost;
};

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
  CostModelParams p = cost_params(a.cost);
  p.pool_size = as_count(a.pool_size, "--pool-size");
  p.selected = as_count(a.selected, "--selected");
  std::vector<CostMethod> methods;
  for (const auto& m : a.methods) {
    if (m == "all") {
      methods = {CostMethod::kRandom, CostMethod::kPerplexity, CostMethod::kIfd,
                 CostMethod::kLess, CostMethod::kEmbedding, CostMethod::kRds};
      break;
    }
    methods.push_back(parse_cost_method(m));
  }
  out << "method\tmodel_params\tselector_params\tpool_size\tselected\ttokens_per_sample\tepochs"
         "\tflops\tflops_exact\n";
  for (CostMethod m : methods) {
    const Flops f = estimate(m, p);
    out << to_string(m) << "\t" << p.model_params << "\t" << p.selector() << "\t" << p.pool_size
        << "\t" << p.selected << "\t" << p.tokens_per_sample << "\t" << p.epochs << "\t"
        << format_g(to_double(f)) << "\t" << to_decimal(f) << "\n";
  }
  return kExitOk;
}

CostMethod cost_method_for(const std::string& method) {
  if (method == "random" || method == "balanced_random" || method == "length") {
    return CostMethod::kRandom;
  }
  if (method == "top_ppl" || method == "mid_ppl") return CostMethod::kPerplexity;
  return parse_cost_method(method);
}

struct ReportArgs {
  std::vector<std::string> manifests;
  std::string out;
  CostArgs cost;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  std::string tsv = "manifest\tmethod\tsource\tcount\tfraction\tflops\n";
  for (const auto& path : a.manifests) {
    const SelectionManifest m = load_selection_manifest(path);
    CostModelParams p = cost_params(a.cost);
    p.pool_size = m.pool_size;
    p.selected = m.selected.size();
    const std::string flops = format_g(to_double(estimate(cost_method_for(m.method), p)));
    const std::string name = fs::path(path).parent_path().filename().string() + "/" +
                             fs::path(path).filename().string();
    std::size_t total = 0;
    for (const auto& [_, c] : m.source_counts) total += c;
    for (const auto& [source, count] : m.source_counts) {
      const double frac = total == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total);
      tsv += name + "\t" + m.method + "\t" + source + "\t" + std::to_string(count) + "\t" +
             format_g(frac, 9) + "\t" + flops + "\n";
    }
    tsv += name + "\t" + m.method + "\t__total__\t" + std::to_string(total) + "\t" +
           (total == 0 ? "0" : "1") + "\t" + flops + "\n";
  }
  if (a.out.empty()) {
    out << tsv;
  } else {
    write_text_file_atomic(a.out, tsv);
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"sift: reproducible instruction-tuning data selection"};
  app.require_subcommand(1);

  DedupArgs dedup;
  auto* sc_dedup = app.add_subcommand("dedup", "Exact-match deduplication of a pool");
  sc_dedup->add_option("--pool", dedup.pool, "Input pool (JSON lines)")->required();
  sc_dedup->add_option("--out", dedup.out, "Deduplicated pool output")->required();
  sc_dedup->add_option("--report", dedup.report, "Per-source TSV report")->required();

  ValidateArgs validate;
  auto* sc_validate = app.add_subcommand("validate", "Check a feature store against a pool");
  sc_validate->add_option("--pool", validate.pool)->required();
  sc_validate->add_option("--features", validate.features, "Feature manifest JSON")->required();
  sc_validate->add_option("--require", validate.require, "Record types that must be present");

  PoolEmbeddingsArgs pe;
  auto* sc_pe = app.add_subcommand("pool-embeddings", "Pool hidden states into embeddings");
  sc_pe->add_option("--pool", pe.pool)->required();
  sc_pe->add_option("--features", pe.features, "Hidden-state manifest")->required();
  sc_pe->add_option("--out-dir", pe.out_dir)->required();
  sc_pe->add_option("--kind", pe.kind, "weighted | uniform | eos_only");
  sc_pe->add_option("--span", pe.span, "full | prompt_only | label_only");
  sc_pe->add_option("--shard-rows", pe.shard_rows);
  sc_pe->add_option("--batch", pe.batch);
  sc_pe->add_flag("--force", pe.force, "Replace a non-empty output directory");

  TopKArgs topk;
  auto* sc_topk = app.add_subcommand("topk", "Exact cosine top-k of queries over a pool");
  sc_topk->add_option("--queries-features", topk.queries_features)->required();
  sc_topk->add_option("--pool-features", topk.pool_features)->required();
  sc_topk->add_option("--k", topk.k)->required();
  sc_topk->add_option("--out", topk.out, "Binary top-k output")->required();
  sc_topk->add_option("--jsonl", topk.jsonl, "Optional JSON-lines copy");
  sc_topk->add_option("--threads", topk.threads);
  sc_topk->add_option("--block-rows", topk.block_rows);

  ScoreArgs score;
  auto* sc_score = app.add_subcommand("score", "Per-sample perplexity or IFD scores");
  sc_score->add_option("--method", score.method, "perplexity | perplexity_response | ifd")
      ->required();
  sc_score->add_option("--features", score.features, "Loss manifest")->required();
  sc_score->add_option("--pool", score.pool, "Pool to validate against");
  sc_score->add_option("--out", score.out, "Output prefix (.tsv and .bin)")->required();

  std::string config_path;
  std::string pool_flag, features_flag, method_flag, aggregation_flag, output_flag, kind_flag,
      span_flag;
  std::size_t n_flag = 0, k_flag = 0;
  std::uint64_t seed_flag = 0;
  double floor_flag = 0;
  bool ifd_filter_flag = true, response_only_flag = false, materialize_flag = false;
  int threads_flag = 0;
  std::vector<std::string> task_flags;
  auto* sc_select = app.add_subcommand("select", "Select a subset and write its manifest");
  sc_select->add_option("--config", config_path, "Run config JSON; flags override its keys");
  auto* o_pool = sc_select->add_option("--pool", pool_flag);
  auto* o_features = sc_select->add_option("--pool-features", features_flag);
  auto* o_method = sc_select->add_option("--method", method_flag);
  auto* o_n = sc_select->add_option("--n", n_flag);
  auto* o_k = sc_select->add_option("--k", k_flag);
  auto* o_seed = sc_select->add_option("--seed", seed_flag);
  auto* o_agg = sc_select->add_option("--aggregation", aggregation_flag, "round_robin | mean_max");
  auto* o_kind = sc_select->add_option("--pooling-kind", kind_flag);
  auto* o_span = sc_select->add_option("--pooling-span", span_flag);
  auto* o_filter = sc_select->add_option("--ifd-filter", ifd_filter_flag, "Drop IFD scores >= 1");
  auto* o_resp = sc_select->add_flag("--response-only", response_only_flag);
  auto* o_floor = sc_select->add_option("--mean-max-floor", floor_flag);
  auto* o_tasks = sc_select->add_option("--task", task_flags, "id=queries.jsonl:features.json");
  auto* o_out = sc_select->add_option("--output", output_flag);
  auto* o_mat = sc_select->add_flag("--materialize", materialize_flag);
  auto* o_threads = sc_select->add_option("--threads", threads_flag);

  FlopsArgs flops;
  auto* sc_flops = app.add_subcommand("flops", "Selection + training FLOPs estimates (TSV)");
  sc_flops->add_option("--method", flops.methods, "Method tags or 'all'")->required();
  sc_flops->add_option("--pool-size", flops.pool_size);
  sc_flops->add_option("--selected", flops.selected)->required();
  add_cost_options(sc_flops, flops.cost);

  ReportArgs report;
  auto* sc_report = app.add_subcommand("report", "Per-source composition and FLOPs of manifests");
  sc_report->add_option("manifests", report.manifests)->required();
  sc_report->add_option("--out", report.out, "Write TSV here instead of stdout");
  add_cost_options(sc_report, report.cost);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sc_dedup->parsed()) return cmd_dedup(dedup, out);
    if (sc_validate->parsed()) return cmd_validate(validate, out);
    if (sc_pe->parsed()) return cmd_pool_embeddings(pe, out);
    if (sc_topk->parsed()) return cmd_topk(topk, out);
    if (sc_score->parsed()) return cmd_score(score, out);
    if (sc_flops->parsed()) return cmd_flops(flops, out);
    if (sc_report->parsed()) return cmd_report(report, out);
    if (sc_select->parsed()) {
      RunConfig c;
      if (!config_path.empty()) {
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(read_text_file(config_path));
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(config_path + ": " + e.what());
        }
        c = config_from_json(j, fs::path(config_path).parent_path());
      }
      if (*o_pool) c.pool = pool_flag;
      if (*o_features) c.pool_features = features_flag;
      if (*o_method) c.method = parse_method(method_flag);
      if (*o_n) c.n = n_flag;
      if (*o_k) c.k = k_flag;
      if (*o_seed) c.seed = seed_flag;
      if (*o_agg) {
        if (aggregation_flag == "round_robin") c.aggregation = Aggregation::kRoundRobin;
        else if (aggregation_flag == "mean_max") c.aggregation = Aggregation::kMeanMax;
        else throw ConfigError("unknown aggregation \"" + aggregation_flag + "\"");
      }
      if (*o_kind) c.pooling.kind = parse_pooling_kind(kind_flag);
      if (*o_span) c.pooling.span = parse_pooling_span(span_flag);
      if (*o_filter) c.ifd_filter = ifd_filter_flag;
      if (*o_resp) c.response_only = response_only_flag;
      if (*o_floor) c.mean_max_floor = floor_flag;
      if (*o_tasks) {
        c.tasks.clear();
        for (const auto& t : task_flags) {
          const auto eq = t.find('=');
          const auto colon = t.rfind(':');
          if (eq == std::string::npos || colon == std::string::npos || colon < eq) {
            throw ConfigError("--task expects id=queries:features, got \"" + t + "\"");
          }
          c.tasks.push_back({t.substr(0, eq), t.substr(eq + 1, colon - eq - 1),
                             t.substr(colon + 1)});
        }
      }
      if (*o_out) c.output = output_flag;
      if (*o_mat) c.materialize = materialize_flag;
      if (*o_threads) c.threads = threads_flag;
      return cmd_select(c, out, err);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace sift::cli
