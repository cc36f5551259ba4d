#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sift/corpus.hpp"

namespace sift {

// Reproducibility record of one selection run. Serialization is canonical:
// the same manifest always produces the same bytes.
struct SelectionManifest {
  std::string method;
  nlohmann::ordered_json parameters = nlohmann::ordered_json::object();
  std::vector<PoolIndex> selected;
  std::map<std::string, std::size_t> source_counts;
  std::string pool_fingerprint;
  std::size_t pool_size = 0;
  std::string feature_manifest;
  std::vector<std::string> task_order;
  std::vector<std::size_t> task_contributions;
  std::vector<std::string> warnings;

  bool operator==(const SelectionManifest&) const = default;
};

// Fills source_counts, pool_size and fingerprint from the pool.
SelectionManifest make_manifest(std::string method, const DataPool& pool,
                                std::vector<PoolIndex> selected);

// Throws DataError on duplicate or out-of-range indices, or counts that do
// not sum to the selection size.
void check_manifest(const SelectionManifest& manifest);

std::string to_json_text(const SelectionManifest& manifest);
SelectionManifest parse_manifest(const std::string& text, const std::string& origin);
void save_manifest(const SelectionManifest& manifest, const std::filesystem::path& path);
SelectionManifest load_selection_manifest(const std::filesystem::path& path);

}  // namespace sift
