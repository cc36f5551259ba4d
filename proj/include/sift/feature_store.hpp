#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sift/corpus.hpp"
#include "sift/io.hpp"
#include "sift/matrix.hpp"

namespace sift {

inline constexpr std::uint32_t kDefaultMaxTokens = 2048;

// ---------------------------------------------------------------------------
// Record types

// count x dim float32 rows for pool indices [start, start + count).
struct EmbeddingShard {
  PoolIndex start = 0;
  FloatMatrix vectors;

  bool operator==(const EmbeddingShard&) const = default;
};

// Half-open token range [begin, end).
struct TokenSpan {
  std::uint32_t begin = 0;
  std::uint32_t end = 0;

  std::uint32_t size() const { return end - begin; }
  bool empty() const { return end <= begin; }
  bool operator==(const TokenSpan&) const = default;
};

// Per-sample last-layer hidden states, tokens x dim.
struct HiddenStateRecord {
  TokenSpan prompt;
  TokenSpan answer;
  FloatMatrix states;

  std::uint32_t token_count() const { return static_cast<std::uint32_t>(states.rows); }
  bool operator==(const HiddenStateRecord&) const = default;
};

struct HiddenStateShard {
  PoolIndex start = 0;
  std::uint32_t dim = 0;
  std::vector<HiddenStateRecord> records;

  bool operator==(const HiddenStateShard&) const = default;
};

// NLL sums (nats) and token counts for one sample. The pool index is implied
// by the shard start plus the record position.
struct LossRecord {
  std::uint32_t full_token_count = 0;
  std::uint32_t prompt_token_count = 0;
  std::uint32_t answer_token_count = 0;
  double full_nll_sum = 0.0;
  double answer_cond_nll_sum = 0.0;
  double answer_uncond_nll_sum = 0.0;

  bool operator==(const LossRecord&) const = default;
};

struct LossShard {
  PoolIndex start = 0;
  std::vector<LossRecord> records;

  bool operator==(const LossShard&) const = default;
};

struct TokenCountShard {
  PoolIndex start = 0;
  std::vector<std::uint32_t> counts;

  bool operator==(const TokenCountShard&) const = default;
};

// Payload layouts (little-endian, after the 32-byte header):
//   embedding:     count * dim f32
//   hidden_states: per record u32 L, u32 prompt_begin, u32 prompt_end,
//                  u32 answer_begin, u32 answer_end, L * dim f32
//   loss:          per record u32 full, u32 prompt, u32 answer, u32 reserved,
//                  f64 full_nll, f64 answer_cond_nll, f64 answer_uncond_nll
//   token_count:   count u32
inline constexpr std::size_t kLossRecordBytes = 40;

void write_shard(const EmbeddingShard& shard, const std::filesystem::path& path);
void write_shard(const HiddenStateShard& shard, const std::filesystem::path& path);
void write_shard(const LossShard& shard, const std::filesystem::path& path);
void write_shard(const TokenCountShard& shard, const std::filesystem::path& path);

// Readers throw DataError on magic/version/type mismatch, truncated or
// oversized payloads, and (when expected_dim is set) dim mismatch.
EmbeddingShard read_embedding_shard(const std::filesystem::path& path,
                                    std::optional<std::uint32_t> expected_dim = {});
HiddenStateShard read_hidden_state_shard(const std::filesystem::path& path,
                                         std::optional<std::uint32_t> expected_dim = {},
                                         std::uint32_t max_tokens = kDefaultMaxTokens);
LossShard read_loss_shard(const std::filesystem::path& path);
TokenCountShard read_token_count_shard(const std::filesystem::path& path);

// Header-only peek.
ShardHeader read_shard_header(const std::filesystem::path& path);

// Zero-copy view of an embedding shard. The mapping is released on destruction,
// which lets scans over large stores stay within a bounded resident set.
class MappedEmbeddingShard {
 public:
  explicit MappedEmbeddingShard(const std::filesystem::path& path,
                                std::optional<std::uint32_t> expected_dim = {});

  PoolIndex start() const { return header_.start; }
  std::size_t count() const { return header_.count; }
  std::uint32_t dim() const { return header_.dim; }
  std::span<const float> row(std::size_t i) const { return {rows_ + i * header_.dim, header_.dim}; }
  const float* data() const { return rows_; }

 private:
  MappedFile file_;
  ShardHeader header_;
  const float* rows_ = nullptr;
};

// ---------------------------------------------------------------------------
// Manifest

struct ShardEntry {
  std::string path;  // relative to the manifest directory
  RecordType type = RecordType::kEmbedding;
  PoolIndex start = 0;
  std::uint64_t count = 0;
  std::uint32_t dim = 0;
};

struct FeatureManifest {
  std::string pool_fingerprint;
  std::string extractor_model;
  std::uint32_t max_tokens = kDefaultMaxTokens;
  std::vector<ShardEntry> shards;
  // Free-form provenance, e.g. the pooling strategy that produced embeddings.
  std::map<std::string, std::string> attributes;
  // Directory the manifest was loaded from; shard paths resolve against it.
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const ShardEntry& entry) const { return base_dir / entry.path; }
  // Entries of one record type sorted by start index.
  std::vector<ShardEntry> shards_of(RecordType type) const;
  bool has(RecordType type) const;
};

FeatureManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const FeatureManifest& manifest, const std::filesystem::path& path);

struct ValidationReport {
  std::size_t pool_size = 0;
  // Indices covered per record type, counted once even when shards overlap.
  std::map<std::string, std::size_t> coverage;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
  std::string to_string() const;
};

// Never throws on bad stores; every problem becomes a failure line. When
// required_types is non-empty, a missing type is itself a failure.
ValidationReport validate_store(const FeatureManifest& manifest, std::size_t pool_size,
                                const std::string& pool_fingerprint,
                                const std::vector<RecordType>& required_types = {});

// ---------------------------------------------------------------------------
// Store access

// Embedding shards of a manifest, checked to partition [0, size()).
class EmbeddingStore {
 public:
  explicit EmbeddingStore(FeatureManifest manifest);
  static EmbeddingStore open(const std::filesystem::path& manifest_path);

  std::size_t size() const { return size_; }
  std::uint32_t dim() const { return dim_; }
  const FeatureManifest& manifest() const { return manifest_; }
  std::size_t shard_count() const { return entries_.size(); }

  MappedEmbeddingShard map_shard(std::size_t i) const;
  FloatMatrix load_all() const;

 private:
  FeatureManifest manifest_;
  std::vector<ShardEntry> entries_;
  std::size_t size_ = 0;
  std::uint32_t dim_ = 0;
};

// Concatenated loss records for [0, pool_size); throws unless the shards
// partition the index space.
std::vector<LossRecord> load_loss_records(const FeatureManifest& manifest);
std::vector<std::uint32_t> load_token_counts(const FeatureManifest& manifest);

// Streams hidden-state records in pool-index order.
void for_each_hidden_state(const FeatureManifest& manifest,
                           const std::function<void(PoolIndex, const HiddenStateRecord&)>& fn);

// Splits `vectors` into shards of at most shard_rows rows under `dir`, named
// "<prefix>-NNNNN.bin", and returns the matching manifest entries.
std::vector<ShardEntry> write_embedding_shards(const FloatMatrix& vectors,
                                               const std::filesystem::path& dir,
                                               const std::string& prefix,
                                               std::size_t shard_rows);

}  // namespace sift
