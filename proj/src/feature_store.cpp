#include "sift/feature_store.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <sstream>

#include <json.hpp>

#include "sift/error.hpp"

namespace sift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_header(AtomicFile& out, const ShardHeader& h) {
  std::array<std::byte, kShardHeaderSize> buf{};
  encode_header(h, buf);
  out.write(buf);
}

template <class T>
void append_span(AtomicFile& out, std::span<const T> values) {
  out.write(std::as_bytes(values));
}

// Cursor over a mapped payload with bounds checks that name the file.
class Reader {
 public:
  Reader(std::span<const std::byte> bytes, std::string path)
      : bytes_(bytes), path_(std::move(path)) {}

  template <class T>
  T take() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void take_floats(std::span<float> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw DataError(path_ + ": truncated payload at byte " + std::to_string(pos_));
    }
  }

  void expect_end() const {
    if (pos_ != bytes_.size()) {
      throw DataError(path_ + ": " + std::to_string(bytes_.size() - pos_) +
                      " trailing bytes after payload");
    }
  }

  std::size_t pos() const { return pos_; }
  void seek(std::size_t p) { pos_ = p; }

 private:
  std::span<const std::byte> bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

ShardHeader expect_header(const MappedFile& file, RecordType type,
                          std::optional<std::uint32_t> expected_dim) {
  const std::string path = file.path().string();
  ShardHeader h = decode_header(file.bytes(), path);
  if (h.type != type) {
    throw DataError(path + ": expected " + std::string(record_type_name(type)) + " shard, found " +
                    std::string(record_type_name(h.type)));
  }
  if (expected_dim && h.dim != *expected_dim) {
    throw DataError(path + ": dim " + std::to_string(h.dim) + " does not match expected " +
                    std::to_string(*expected_dim));
  }
  return h;
}

void check_fixed_payload(const MappedFile& file, const ShardHeader& h, std::size_t record_bytes) {
  const std::size_t expected = kShardHeaderSize + h.count * record_bytes;
  const std::size_t actual = file.bytes().size();
  if (actual < expected) {
    throw DataError(file.path().string() + ": truncated payload (" + std::to_string(actual) +
                    " of " + std::to_string(expected) + " bytes)");
  }
  if (actual > expected) {
    throw DataError(file.path().string() + ": " + std::to_string(actual - expected) +
                    " trailing bytes after payload");
  }
}

void check_spans(const HiddenStateRecord& r, std::uint32_t max_tokens, const std::string& where) {
  const std::uint32_t L = r.token_count();
  if (L < 1 || L > max_tokens) {
    throw DataError(where + ": token count " + std::to_string(L) + " outside [1, " +
                    std::to_string(max_tokens) + "]");
  }
  const bool ordered = r.prompt.begin <= r.prompt.end && r.prompt.end <= r.answer.begin &&
                       r.answer.begin <= r.answer.end && r.answer.end <= L;
  if (!ordered) {
    throw DataError(where + ": prompt/answer spans are not ordered, disjoint and within [0, " +
                    std::to_string(L) + ")");
  }
}

// Reads one hidden-state record at the cursor into `out`.
void read_hidden_record(Reader& in, std::uint32_t dim, HiddenStateRecord& out) {
  const auto L = in.take<std::uint32_t>();
  out.prompt.begin = in.take<std::uint32_t>();
  out.prompt.end = in.take<std::uint32_t>();
  out.answer.begin = in.take<std::uint32_t>();
  out.answer.end = in.take<std::uint32_t>();
  in.need(std::size_t{L} * dim * sizeof(float));
  out.states.rows = L;
  out.states.cols = dim;
  out.states.data.resize(std::size_t{L} * dim);
  in.take_floats(out.states.data);
}

}  // namespace

// ---------------------------------------------------------------------------
// Writers

void write_shard(const EmbeddingShard& shard, const fs::path& path) {
  AtomicFile out(path);
  write_header(out, {RecordType::kEmbedding, shard.start, shard.vectors.rows,
                     static_cast<std::uint32_t>(shard.vectors.cols)});
  append_span<float>(out, shard.vectors.data);
  out.commit();
}

void write_shard(const HiddenStateShard& shard, const fs::path& path) {
  AtomicFile out(path);
  write_header(out, {RecordType::kHiddenStates, shard.start, shard.records.size(), shard.dim});
  for (const auto& r : shard.records) {
    if (r.states.cols != shard.dim) {
      throw DataError(path.string() + ": record dim " + std::to_string(r.states.cols) +
                      " differs from shard dim " + std::to_string(shard.dim));
    }
    const std::array<std::uint32_t, 5> head = {r.token_count(), r.prompt.begin, r.prompt.end,
                                               r.answer.begin, r.answer.end};
    append_span<std::uint32_t>(out, head);
    append_span<float>(out, r.states.data);
  }
  out.commit();
}

void write_shard(const LossShard& shard, const fs::path& path) {
  AtomicFile out(path);
  write_header(out, {RecordType::kLoss, shard.start, shard.records.size(), 0});
  for (const auto& r : shard.records) {
    const std::array<std::uint32_t, 4> counts = {r.full_token_count, r.prompt_token_count,
                                                 r.answer_token_count, 0};
    const std::array<double, 3> sums = {r.full_nll_sum, r.answer_cond_nll_sum,
                                        r.answer_uncond_nll_sum};
    append_span<std::uint32_t>(out, counts);
    append_span<double>(out, sums);
  }
  out.commit();
}

void write_shard(const TokenCountShard& shard, const fs::path& path) {
  AtomicFile out(path);
  write_header(out, {RecordType::kTokenCount, shard.start, shard.counts.size(), 1});
  append_span<std::uint32_t>(out, shard.counts);
  out.commit();
}

// ---------------------------------------------------------------------------
// Readers

ShardHeader read_shard_header(const fs::path& path) {
  const MappedFile file(path);
  return decode_header(file.bytes(), path.string());
}

EmbeddingShard read_embedding_shard(const fs::path& path, std::optional<std::uint32_t> expected_dim) {
  const MappedFile file(path);
  const ShardHeader h = expect_header(file, RecordType::kEmbedding, expected_dim);
  check_fixed_payload(file, h, std::size_t{h.dim} * sizeof(float));
  EmbeddingShard shard;
  shard.start = h.start;
  shard.vectors = FloatMatrix(h.count, h.dim);
  std::memcpy(shard.vectors.data.data(), file.bytes().data() + kShardHeaderSize,
              shard.vectors.data.size() * sizeof(float));
  return shard;
}

HiddenStateShard read_hidden_state_shard(const fs::path& path,
                                         std::optional<std::uint32_t> expected_dim,
                                         std::uint32_t max_tokens) {
  const MappedFile file(path);
  const ShardHeader h = expect_header(file, RecordType::kHiddenStates, expected_dim);
  Reader in(file.bytes(), path.string());
  in.seek(kShardHeaderSize);
  HiddenStateShard shard;
  shard.start = h.start;
  shard.dim = h.dim;
  shard.records.resize(h.count);
  for (std::uint64_t i = 0; i < h.count; ++i) {
    read_hidden_record(in, h.dim, shard.records[i]);
    check_spans(shard.records[i], max_tokens,
                path.string() + ": pool index " + std::to_string(h.start + i));
  }
  in.expect_end();
  return shard;
}

LossShard read_loss_shard(const fs::path& path) {
  const MappedFile file(path);
  const ShardHeader h = expect_header(file, RecordType::kLoss, std::nullopt);
  check_fixed_payload(file, h, kLossRecordBytes);
  Reader in(file.bytes(), path.string());
  in.seek(kShardHeaderSize);
  LossShard shard;
  shard.start = h.start;
  shard.records.resize(h.count);
  for (auto& r : shard.records) {
    r.full_token_count = in.take<std::uint32_t>();
    r.prompt_token_count = in.take<std::uint32_t>();
    r.answer_token_count = in.take<std::uint32_t>();
    in.take<std::uint32_t>();
    r.full_nll_sum = in.take<double>();
    r.answer_cond_nll_sum = in.take<double>();
    r.answer_uncond_nll_sum = in.take<double>();
  }
  return shard;
}

TokenCountShard read_token_count_shard(const fs::path& path) {
  const MappedFile file(path);
  const ShardHeader h = expect_header(file, RecordType::kTokenCount, std::nullopt);
  check_fixed_payload(file, h, sizeof(std::uint32_t));
  TokenCountShard shard;
  shard.start = h.start;
  shard.counts.resize(h.count);
  std::memcpy(shard.counts.data(), file.bytes().data() + kShardHeaderSize,
              h.count * sizeof(std::uint32_t));
  return shard;
}

MappedEmbeddingShard::MappedEmbeddingShard(const fs::path& path,
                                           std::optional<std::uint32_t> expected_dim)
    : file_(path) {
  header_ = expect_header(file_, RecordType::kEmbedding, expected_dim);
  check_fixed_payload(file_, header_, std::size_t{header_.dim} * sizeof(float));
  // Header is 32 bytes and mmap is page aligned, so the float payload is aligned.
  rows_ = reinterpret_cast<const float*>(file_.bytes().data() + kShardHeaderSize);
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

RecordType parse_record_type(const std::string& name) {
  for (std::uint32_t t = 1; t <= 7; ++t) {
    const auto type = static_cast<RecordType>(t);
    if (record_type_name(type) == name) return type;
  }
  throw DataError("unknown shard type \"" + name + "\" in manifest");
}

}  // namespace

std::vector<ShardEntry> FeatureManifest::shards_of(RecordType type) const {
  std::vector<ShardEntry> out;
  for (const auto& s : shards) {
    if (s.type == type) out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ShardEntry& a, const ShardEntry& b) { return a.start < b.start; });
  return out;
}

bool FeatureManifest::has(RecordType type) const {
  return std::any_of(shards.begin(), shards.end(),
                     [type](const ShardEntry& s) { return s.type == type; });
}

FeatureManifest load_manifest(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": invalid manifest JSON: " + e.what());
  }
  FeatureManifest m;
  try {
    m.pool_fingerprint = j.at("pool_fingerprint").get<std::string>();
    m.extractor_model = j.value("extractor_model", std::string{});
    m.max_tokens = j.value("max_tokens", kDefaultMaxTokens);
    for (const auto& s : j.at("shards")) {
      ShardEntry e;
      e.path = s.at("path").get<std::string>();
      e.type = parse_record_type(s.at("type").get<std::string>());
      e.start = s.at("start").get<PoolIndex>();
      e.count = s.at("count").get<std::uint64_t>();
      e.dim = s.value("dim", std::uint32_t{0});
      m.shards.push_back(std::move(e));
    }
    if (j.contains("attributes")) {
      m.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed manifest: " + e.what());
  }
  m.base_dir = path.parent_path();
  return m;
}

void save_manifest(const FeatureManifest& m, const fs::path& path) {
  nlohmann::ordered_json j;
  j["pool_fingerprint"] = m.pool_fingerprint;
  j["extractor_model"] = m.extractor_model;
  j["max_tokens"] = m.max_tokens;
  auto& shards = j["shards"] = nlohmann::ordered_json::array();
  for (const auto& s : m.shards) {
    shards.push_back({{"path", s.path},
                      {"type", record_type_name(s.type)},
                      {"start", s.start},
                      {"count", s.count},
                      {"dim", s.dim}});
  }
  if (!m.attributes.empty()) j["attributes"] = m.attributes;
  write_text_file_atomic(path, j.dump(2) + "\n");
}

std::string ValidationReport::to_string() const {
  std::ostringstream os;
  os << (ok() ? "ok" : "FAILED") << "\n";
  for (const auto& [type, covered] : coverage) {
    os << "coverage\t" << type << "\t" << covered << "/" << pool_size << "\n";
  }
  for (const auto& f : failures) os << "failure\t" << f << "\n";
  return os.str();
}

ValidationReport validate_store(const FeatureManifest& manifest, std::size_t pool_size,
                                const std::string& pool_fingerprint,
                                const std::vector<RecordType>& required_types) {
  ValidationReport report;
  report.pool_size = pool_size;
  auto fail = [&](std::string msg) { report.failures.push_back(std::move(msg)); };

  if (manifest.pool_fingerprint != pool_fingerprint) {
    fail("stale features: manifest fingerprint " + manifest.pool_fingerprint +
         " does not match pool " + pool_fingerprint);
  }
  for (RecordType t : required_types) {
    if (!manifest.has(t)) fail("no " + std::string(record_type_name(t)) + " shards in manifest");
  }

  for (std::uint32_t tag = 1; tag <= 7; ++tag) {
    const auto type = static_cast<RecordType>(tag);
    const auto entries = manifest.shards_of(type);
    if (entries.empty()) continue;
    const std::string tname(record_type_name(type));

    // Partition check over [0, pool_size).
    PoolIndex cursor = 0;
    std::size_t covered = 0;
    for (const auto& e : entries) {
      const PoolIndex end = e.start + e.count;
      if (e.start > cursor) {
        fail(tname + ": missing indices " + std::to_string(cursor) + "-" +
             std::to_string(std::min<PoolIndex>(e.start, pool_size) - 1));
      } else if (e.start < cursor && e.count > 0) {
        fail(tname + ": shard " + e.path + " overlaps indices " + std::to_string(e.start) + "-" +
             std::to_string(std::min(cursor, end) - 1));
      }
      const PoolIndex lo = std::max(e.start, cursor);
      const PoolIndex hi = std::min<PoolIndex>(end, pool_size);
      if (hi > lo) covered += hi - lo;
      cursor = std::max(cursor, end);
    }
    if (cursor < pool_size) {
      fail(tname + ": missing indices " + std::to_string(cursor) + "-" +
           std::to_string(pool_size - 1));
    } else if (cursor > pool_size) {
      fail(tname + ": shards extend past pool end (" + std::to_string(cursor) + " > " +
           std::to_string(pool_size) + ")");
    }
    report.coverage[tname] = covered;

    const std::uint32_t dim0 = entries.front().dim;
    for (const auto& e : entries) {
      if (e.dim != dim0) {
        fail(tname + ": shard " + e.path + " has dim " + std::to_string(e.dim) + ", expected " +
             std::to_string(dim0));
      }
      // Verify each file against its manifest entry.
      try {
        const fs::path p = manifest.resolve(e);
        switch (type) {
          case RecordType::kEmbedding: MappedEmbeddingShard(p, e.dim); break;
          case RecordType::kHiddenStates: read_hidden_state_shard(p, e.dim, manifest.max_tokens); break;
          case RecordType::kLoss: read_loss_shard(p); break;
          case RecordType::kTokenCount: read_token_count_shard(p); break;
          default: break;
        }
        const ShardHeader h = read_shard_header(p);
        if (h.start != e.start || h.count != e.count) {
          fail(tname + ": shard " + e.path + " header range [" + std::to_string(h.start) + ", " +
               std::to_string(h.start + h.count) + ") disagrees with manifest");
        }
      } catch (const std::exception& ex) {
        fail(tname + ": " + ex.what());
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Store access

namespace {

// Throws unless entries partition [0, total) and returns total.
std::size_t require_partition(const std::vector<ShardEntry>& entries, const std::string& what) {
  PoolIndex cursor = 0;
  for (const auto& e : entries) {
    if (e.start != cursor) {
      throw DataError(what + ": shards do not partition the index space (expected start " +
                      std::to_string(cursor) + ", found " + std::to_string(e.start) + " in " +
                      e.path + ")");
    }
    cursor += e.count;
  }
  return cursor;
}

}  // namespace

EmbeddingStore::EmbeddingStore(FeatureManifest manifest)
    : manifest_(std::move(manifest)), entries_(manifest_.shards_of(RecordType::kEmbedding)) {
  if (entries_.empty()) throw DataError("manifest has no embedding shards");
  size_ = require_partition(entries_, "embedding store");
  dim_ = entries_.front().dim;
  for (const auto& e : entries_) {
    if (e.dim != dim_) throw DataError("embedding shard " + e.path + " has mismatched dim");
  }
}

EmbeddingStore EmbeddingStore::open(const fs::path& manifest_path) {
  return EmbeddingStore(load_manifest(manifest_path));
}

MappedEmbeddingShard EmbeddingStore::map_shard(std::size_t i) const {
  MappedEmbeddingShard shard(manifest_.resolve(entries_[i]), dim_);
  if (shard.start() != entries_[i].start || shard.count() != entries_[i].count) {
    throw DataError(entries_[i].path + ": header disagrees with manifest entry");
  }
  return shard;
}

FloatMatrix EmbeddingStore::load_all() const {
  FloatMatrix out(size_, dim_);
  for (std::size_t s = 0; s < entries_.size(); ++s) {
    const auto shard = map_shard(s);
    std::memcpy(out.row(shard.start()).data(), shard.data(),
                shard.count() * std::size_t{dim_} * sizeof(float));
  }
  return out;
}

std::vector<LossRecord> load_loss_records(const FeatureManifest& manifest) {
  const auto entries = manifest.shards_of(RecordType::kLoss);
  if (entries.empty()) throw DataError("manifest has no loss shards");
  require_partition(entries, "loss store");
  std::vector<LossRecord> out;
  for (const auto& e : entries) {
    auto shard = read_loss_shard(manifest.resolve(e));
    out.insert(out.end(), shard.records.begin(), shard.records.end());
  }
  return out;
}

std::vector<std::uint32_t> load_token_counts(const FeatureManifest& manifest) {
  const auto entries = manifest.shards_of(RecordType::kTokenCount);
  if (entries.empty()) throw DataError("manifest has no token_count shards");
  require_partition(entries, "token count store");
  std::vector<std::uint32_t> out;
  for (const auto& e : entries) {
    auto shard = read_token_count_shard(manifest.resolve(e));
    out.insert(out.end(), shard.counts.begin(), shard.counts.end());
  }
  return out;
}

void for_each_hidden_state(const FeatureManifest& manifest,
                           const std::function<void(PoolIndex, const HiddenStateRecord&)>& fn) {
  const auto entries = manifest.shards_of(RecordType::kHiddenStates);
  if (entries.empty()) throw DataError("manifest has no hidden_states shards");
  require_partition(entries, "hidden state store");
  HiddenStateRecord record;
  for (const auto& e : entries) {
    const MappedFile file(manifest.resolve(e));
    const ShardHeader h = expect_header(file, RecordType::kHiddenStates, e.dim);
    Reader in(file.bytes(), file.path().string());
    in.seek(kShardHeaderSize);
    for (std::uint64_t i = 0; i < h.count; ++i) {
      read_hidden_record(in, h.dim, record);
      check_spans(record, manifest.max_tokens,
                  e.path + ": pool index " + std::to_string(h.start + i));
      fn(h.start + i, record);
    }
    in.expect_end();
  }
}

std::vector<ShardEntry> write_embedding_shards(const FloatMatrix& vectors, const fs::path& dir,
                                               const std::string& prefix, std::size_t shard_rows) {
  if (shard_rows == 0) throw ConfigError("shard_rows must be positive");
  fs::create_directories(dir);
  std::vector<ShardEntry> entries;
  std::size_t begin = 0;
  std::size_t ordinal = 0;
  do {
    const std::size_t count = std::min(shard_rows, vectors.rows - begin);
    EmbeddingShard shard;
    shard.start = begin;
    shard.vectors = FloatMatrix(count, vectors.cols);
    std::copy_n(vectors.data.begin() + static_cast<std::ptrdiff_t>(begin * vectors.cols),
                count * vectors.cols, shard.vectors.data.begin());
    char name[64];
    std::snprintf(name, sizeof(name), "%s-%05zu.bin", prefix.c_str(), ordinal++);
    write_shard(shard, dir / name);
    entries.push_back({name, RecordType::kEmbedding, begin, count,
                       static_cast<std::uint32_t>(vectors.cols)});
    begin += count;
  } while (begin < vectors.rows);
  return entries;
}

}  // namespace sift
