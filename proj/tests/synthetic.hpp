#pragma once

// Synthetic workspaces on disk: a pool, its feature store, and per-task query
// sets with their own embedding stores.

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "sift/corpus.hpp"
#include "sift/feature_store.hpp"
#include "sift/fingerprint.hpp"

namespace sift::test {

struct Workspace {
  std::filesystem::path pool;
  std::filesystem::path features;
  std::vector<std::string> task_ids;
  std::vector<std::filesystem::path> queries;
  std::vector<std::filesystem::path> query_features;
};

struct WorkspaceOptions {
  std::size_t pool_size = 100;
  std::size_t dim = 8;
  std::size_t tasks = 1;
  std::size_t queries_per_task = 4;
  std::size_t shard_rows = 1000;
  std::uint64_t seed = 1;
  bool hidden_states = false;
};

inline std::vector<Sample> synthetic_samples(std::size_t count, const std::string& tag,
                                             std::mt19937_64& gen) {
  static const char* kSources[] = {"flan_v2", "cot", "oasst1", "sharegpt", "wizardlm"};
  std::uniform_int_distribution<int> src(0, 4);
  std::vector<Sample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Sample s;
    s.pool_index = i;
    s.source = kSources[src(gen)];
    s.messages = {{Role::kUser, tag + " question " + std::to_string(i)},
                  {Role::kAssistant, "answer " + std::to_string(gen() % 1000)}};
    out.push_back(std::move(s));
  }
  return out;
}

inline FloatMatrix gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& gen) {
  std::normal_distribution<float> dist(0.0f, 1.0f);
  FloatMatrix m(rows, cols);
  for (float& x : m.data) x = dist(gen);
  return m;
}

// Writes an embedding store for `vectors` under dir and returns the manifest path.
inline std::filesystem::path write_embedding_store(const FloatMatrix& vectors,
                                                   const std::filesystem::path& dir,
                                                   const std::string& fingerprint,
                                                   std::size_t shard_rows) {
  std::filesystem::create_directories(dir);
  FeatureManifest m;
  m.pool_fingerprint = fingerprint;
  m.extractor_model = "synthetic";
  m.shards = write_embedding_shards(vectors, dir, "emb", shard_rows);
  save_manifest(m, dir / "manifest.json");
  return dir / "manifest.json";
}

inline Workspace make_workspace(const std::filesystem::path& root, const WorkspaceOptions& o) {
  namespace fs = std::filesystem;
  std::mt19937_64 gen(o.seed);
  Workspace ws;
  fs::create_directories(root);
  ws.pool = root / "pool.jsonl";
  write_pool(ws.pool, synthetic_samples(o.pool_size, "pool", gen));
  const std::string fp = file_fingerprint(ws.pool);

  const fs::path fdir = root / "features";
  fs::create_directories(fdir);
  FeatureManifest m;
  m.pool_fingerprint = fp;
  m.extractor_model = "synthetic";
  m.shards = write_embedding_shards(gaussian(o.pool_size, o.dim, gen), fdir, "emb", o.shard_rows);

  std::uniform_int_distribution<std::uint32_t> len(2, 64);
  std::uniform_real_distribution<double> nll(0.1, 4.0);
  LossShard loss{0, {}};
  TokenCountShard counts{0, {}};
  for (std::size_t i = 0; i < o.pool_size; ++i) {
    LossRecord r;
    r.prompt_token_count = len(gen);
    r.answer_token_count = len(gen);
    r.full_token_count = r.prompt_token_count + r.answer_token_count;
    r.full_nll_sum = nll(gen) * r.full_token_count;
    r.answer_cond_nll_sum = nll(gen) * r.answer_token_count;
    r.answer_uncond_nll_sum = nll(gen) * r.answer_token_count;
    loss.records.push_back(r);
    counts.counts.push_back(r.full_token_count);
  }
  write_shard(loss, fdir / "loss.bin");
  write_shard(counts, fdir / "tokens.bin");
  m.shards.push_back({"loss.bin", RecordType::kLoss, 0, o.pool_size, 0});
  m.shards.push_back({"tokens.bin", RecordType::kTokenCount, 0, o.pool_size, 0});

  if (o.hidden_states) {
    HiddenStateShard hs{0, static_cast<std::uint32_t>(o.dim), {}};
    std::uniform_int_distribution<std::uint32_t> tokens(2, 12);
    for (std::size_t i = 0; i < o.pool_size; ++i) {
      HiddenStateRecord r;
      const std::uint32_t L = tokens(gen);
      r.states = gaussian(L, o.dim, gen);
      r.prompt = {0, L / 2};
      r.answer = {L / 2, L};
      hs.records.push_back(std::move(r));
    }
    write_shard(hs, fdir / "hidden.bin");
    m.shards.push_back({"hidden.bin", RecordType::kHiddenStates, 0, o.pool_size,
                        static_cast<std::uint32_t>(o.dim)});
  }
  save_manifest(m, fdir / "manifest.json");
  ws.features = fdir / "manifest.json";

  for (std::size_t t = 0; t < o.tasks; ++t) {
    const std::string id = "task" + std::to_string(t);
    const fs::path qpath = root / (id + ".jsonl");
    write_pool(qpath, synthetic_samples(o.queries_per_task, id, gen));
    const auto qm = write_embedding_store(gaussian(o.queries_per_task, o.dim, gen),
                                          root / (id + "-features"), file_fingerprint(qpath),
                                          o.queries_per_task);
    ws.task_ids.push_back(id);
    ws.queries.push_back(qpath);
    ws.query_features.push_back(qm);
  }
  return ws;
}

}  // namespace sift::test
