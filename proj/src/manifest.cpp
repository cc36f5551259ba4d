#include "sift/manifest.hpp"

#include <unordered_set>

#include "sift/error.hpp"
#include "sift/io.hpp"

namespace sift {

using ojson = nlohmann::ordered_json;

SelectionManifest make_manifest(std::string method, const DataPool& pool,
                                std::vector<PoolIndex> selected) {
  SelectionManifest m;
  m.method = std::move(method);
  m.pool_fingerprint = pool.fingerprint;
  m.pool_size = pool.size();
  for (const auto& [source, _] : pool.source_histogram) m.source_counts[source] = 0;
  for (PoolIndex i : selected) {
    if (i >= pool.size()) throw DataError("selected index " + std::to_string(i) + " out of range");
    ++m.source_counts[pool.samples[i].source];
  }
  m.selected = std::move(selected);
  return m;
}

void check_manifest(const SelectionManifest& m) {
  std::unordered_set<PoolIndex> seen;
  for (PoolIndex i : m.selected) {
    if (i >= m.pool_size) throw DataError("manifest index " + std::to_string(i) + " out of range");
    if (!seen.insert(i).second) {
      throw DataError("manifest selects pool index " + std::to_string(i) + " twice");
    }
  }
  std::size_t total = 0;
  for (const auto& [_, c] : m.source_counts) total += c;
  if (total != m.selected.size()) {
    throw DataError("manifest source counts sum to " + std::to_string(total) + ", expected " +
                    std::to_string(m.selected.size()));
  }
}

std::string to_json_text(const SelectionManifest& m) {
  ojson j;
  j["method"] = m.method;
  j["parameters"] = m.parameters;
  j["pool_fingerprint"] = m.pool_fingerprint;
  j["pool_size"] = m.pool_size;
  j["feature_manifest"] = m.feature_manifest;
  j["task_order"] = m.task_order;
  j["task_contributions"] = m.task_contributions;
  j["source_counts"] = m.source_counts;
  j["selected_count"] = m.selected.size();
  j["warnings"] = m.warnings;
  j["selected"] = m.selected;
  return j.dump(2) + "\n";
}

SelectionManifest parse_manifest(const std::string& text, const std::string& origin) {
  try {
    const ojson j = ojson::parse(text);
    SelectionManifest m;
    m.method = j.at("method").get<std::string>();
    m.parameters = j.value("parameters", ojson::object());
    m.pool_fingerprint = j.value("pool_fingerprint", std::string{});
    m.pool_size = j.at("pool_size").get<std::size_t>();
    m.feature_manifest = j.value("feature_manifest", std::string{});
    m.task_order = j.value("task_order", std::vector<std::string>{});
    m.task_contributions = j.value("task_contributions", std::vector<std::size_t>{});
    m.source_counts = j.at("source_counts").get<std::map<std::string, std::size_t>>();
    m.warnings = j.value("warnings", std::vector<std::string>{});
    m.selected = j.at("selected").get<std::vector<PoolIndex>>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": malformed selection manifest: " + e.what());
  }
}

void save_manifest(const SelectionManifest& manifest, const std::filesystem::path& path) {
  write_text_file_atomic(path, to_json_text(manifest));
}

SelectionManifest load_selection_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.string());
}

}  // namespace sift
