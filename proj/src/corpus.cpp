#include "sift/corpus.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <unordered_map>

#include <json.hpp>

#include "sift/error.hpp"
#include "sift/fingerprint.hpp"
#include "sift/io.hpp"

namespace sift {

using nlohmann::json;

std::string_view role_name(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

bool Sample::has_user_turn() const {
  return std::any_of(messages.begin(), messages.end(),
                     [](const Message& m) { return m.role == Role::kUser; });
}

bool Sample::has_assistant_turn() const {
  return std::any_of(messages.begin(), messages.end(),
                     [](const Message& m) { return m.role == Role::kAssistant; });
}

SourceHistogram compute_histogram(const std::vector<Sample>& samples) {
  SourceHistogram h;
  for (const auto& s : samples) ++h[s.source];
  return h;
}

void check_pool_invariants(const DataPool& pool) {
  for (std::size_t i = 0; i < pool.samples.size(); ++i) {
    if (pool.samples[i].pool_index != i) {
      throw DataError("pool index " + std::to_string(pool.samples[i].pool_index) +
                      " at position " + std::to_string(i));
    }
    if (pool.samples[i].source.empty()) {
      throw DataError("sample " + std::to_string(i) + " has an empty source");
    }
  }
  if (compute_histogram(pool.samples) != pool.source_histogram) {
    throw DataError("source histogram does not match samples");
  }
}

namespace {

std::optional<Role> parse_role(std::string_view s) {
  if (s == "user") return Role::kUser;
  if (s == "assistant") return Role::kAssistant;
  if (s == "system") return Role::kSystem;
  return std::nullopt;
}

// Returns an error message, or empty on success.
std::string parse_record(std::string_view line, Sample& out) {
  json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) return "invalid JSON";
  if (!j.is_object()) return "record is not an object";
  auto src = j.find("source");
  if (src == j.end() || !src->is_string()) return "missing string field \"source\"";
  out.source = src->get<std::string>();
  if (out.source.empty()) return "empty \"source\"";
  auto msgs = j.find("messages");
  if (msgs == j.end() || !msgs->is_array()) return "missing array field \"messages\"";
  out.messages.clear();
  out.messages.reserve(msgs->size());
  for (const auto& m : *msgs) {
    if (!m.is_object()) return "message is not an object";
    auto role = m.find("role");
    auto content = m.find("content");
    if (role == m.end() || !role->is_string()) return "message missing \"role\"";
    if (content == m.end() || !content->is_string()) return "message missing \"content\"";
    auto r = parse_role(role->get_ref<const std::string&>());
    if (!r) return "unknown role \"" + role->get<std::string>() + "\"";
    out.messages.push_back({*r, content->get<std::string>()});
  }
  return {};
}

}  // namespace

DataPool parse_pool(std::string_view text, const std::string& origin) {
  struct Line {
    std::string_view text;
    std::size_t number;
  };
  std::vector<Line> lines;
  std::size_t number = 0;
  while (!text.empty()) {
    ++number;
    auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;
    lines.push_back({line, number});
  }
  if (lines.empty()) throw DataError(origin + ": empty pool");

  const auto count = static_cast<std::int64_t>(lines.size());
  std::vector<Sample> samples(lines.size());
  std::vector<std::string> errors(lines.size());
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t i = 0; i < count; ++i) {
    errors[i] = parse_record(lines[i].text, samples[i]);
    samples[i].pool_index = static_cast<PoolIndex>(i);
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!errors[i].empty()) throw ParseError(origin, lines[i].number, errors[i]);
  }

  DataPool pool;
  pool.samples = std::move(samples);
  pool.source_histogram = compute_histogram(pool.samples);
  return pool;
}

DataPool load_pool(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw DataError(path.string() + ": no such file");
  }
  const MappedFile file(path);
  const auto bytes = file.bytes();
  std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  DataPool pool = parse_pool(text, path.string());
  pool.fingerprint = sha256_fingerprint(bytes);
  return pool;
}

std::string serialize_sample(const Sample& sample) {
  nlohmann::ordered_json j;
  j["source"] = sample.source;
  auto& msgs = j["messages"] = nlohmann::ordered_json::array();
  for (const auto& m : sample.messages) {
    msgs.push_back({{"role", role_name(m.role)}, {"content", m.text}});
  }
  return j.dump();
}

void write_pool(const std::filesystem::path& path, const std::vector<Sample>& samples) {
  AtomicFile out(path);
  for (const auto& s : samples) {
    out.write(serialize_sample(s));
    out.write("\n");
  }
  out.commit();
}

std::size_t DedupReport::removed_count() const {
  std::size_t n = 0;
  for (const auto& [_, v] : removed) n += v.size();
  return n;
}

std::string dedup_key(const Sample& sample) {
  std::string key;
  std::size_t total = 0;
  for (const auto& m : sample.messages) total += m.text.size() + 9;
  key.reserve(total);
  for (const auto& m : sample.messages) {
    key.push_back(static_cast<char>(m.role));
    const std::uint64_t len = m.text.size();
    key.append(reinterpret_cast<const char*>(&len), sizeof(len));
    key.append(m.text);
  }
  return key;
}

std::pair<DataPool, DedupReport> dedup_pool(const DataPool& pool) {
  const auto count = static_cast<std::int64_t>(pool.size());
  std::vector<std::string> keys(pool.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) keys[i] = dedup_key(pool.samples[i]);

  std::unordered_map<std::string_view, PoolIndex> first_seen;
  first_seen.reserve(pool.size());
  DataPool out;
  DedupReport report;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Sample& s = pool.samples[i];
    if (first_seen.emplace(keys[i], i).second) {
      Sample kept = s;
      kept.pool_index = out.samples.size();
      out.samples.push_back(std::move(kept));
      report.kept_origin.push_back(i);
    } else {
      report.removed[s.source].push_back(i);
    }
  }
  out.source_histogram = compute_histogram(out.samples);
  return {std::move(out), std::move(report)};
}

std::vector<QuerySet> load_query_sets(
    const std::vector<std::pair<std::string, std::filesystem::path>>& paths) {
  std::vector<QuerySet> sets;
  sets.reserve(paths.size());
  for (const auto& [task, path] : paths) {
    if (!std::filesystem::exists(path)) {
      throw DataError("task " + task + ": query file " + path.string() + " not found");
    }
    DataPool p;
    try {
      p = load_pool(path);
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw DataError("task " + task + ": " + e.what());
    }
    sets.push_back({task, std::move(p.samples)});
  }
  return sets;
}

}  // namespace sift
