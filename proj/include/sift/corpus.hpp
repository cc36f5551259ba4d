#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace sift {

using PoolIndex = std::uint64_t;

enum class Role : std::uint8_t { kSystem, kUser, kAssistant };

std::string_view role_name(Role role);

struct Message {
  Role role = Role::kUser;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct Sample {
  PoolIndex pool_index = 0;
  std::string source;
  std::vector<Message> messages;

  bool has_user_turn() const;
  bool has_assistant_turn() const;

  bool operator==(const Sample&) const = default;
};

using SourceHistogram = std::map<std::string, std::size_t>;

// Samples are indexed positionally; samples[i].pool_index == i always holds.
struct DataPool {
  std::vector<Sample> samples;
  SourceHistogram source_histogram;
  // Content hash of the file the pool was loaded from; empty for derived pools.
  std::string fingerprint;

  std::size_t size() const { return samples.size(); }
  bool operator==(const DataPool&) const = default;
};

SourceHistogram compute_histogram(const std::vector<Sample>& samples);

// Throws DataError unless indices are contiguous from 0, sources are non-empty
// and the histogram matches the samples.
void check_pool_invariants(const DataPool& pool);

// JSON-lines: one {"source": str, "messages": [{"role", "content"}...]} per line.
// Blank lines are skipped but still counted for error line numbers.
DataPool parse_pool(std::string_view text, const std::string& origin);
DataPool load_pool(const std::filesystem::path& path);

// One line per sample in pool order, fields "source" then "messages".
std::string serialize_sample(const Sample& sample);
void write_pool(const std::filesystem::path& path, const std::vector<Sample>& samples);

struct DedupReport {
  // Original pool indices of removed samples, grouped by source.
  std::map<std::string, std::vector<PoolIndex>> removed;
  // kept_origin[i] is the original index of output sample i.
  std::vector<PoolIndex> kept_origin;

  std::size_t removed_count() const;
};

// Exact-match key: the ordered (role, text) turn sequence, byte-exact.
std::string dedup_key(const Sample& sample);

// Keeps the first occurrence of each distinct message sequence. Output samples
// are re-indexed contiguously in their original relative order.
std::pair<DataPool, DedupReport> dedup_pool(const DataPool& pool);

struct QuerySet {
  std::string task_id;
  std::vector<Sample> queries;
};

// Task order follows the input order.
std::vector<QuerySet> load_query_sets(
    const std::vector<std::pair<std::string, std::filesystem::path>>& paths);

}  // namespace sift
