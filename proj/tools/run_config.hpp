#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sift/pooling.hpp"

namespace sift::cli {

enum class Method {
  kRandom,
  kBalancedRandom,
  kLength,
  kTopPpl,
  kMidPpl,
  kIfd,
  kLess,
  kEmbedding,
  kRds,
};

std::string_view to_string(Method method);
Method parse_method(std::string_view name);
bool is_query_driven(Method method);

enum class Aggregation { kRoundRobin, kMeanMax };

struct TaskSpec {
  std::string id;
  std::filesystem::path queries;
  std::filesystem::path features;
};

struct RunConfig {
  std::filesystem::path pool;
  std::filesystem::path pool_features;
  Method method = Method::kRds;
  std::size_t n = 0;
  std::size_t k = 0;  // 0 picks min(|pool|, 2n)
  std::uint64_t seed = 0;
  Aggregation aggregation = Aggregation::kRoundRobin;
  PoolingStrategy pooling;
  bool ifd_filter = true;
  bool response_only = false;
  std::optional<double> mean_max_floor;
  std::vector<TaskSpec> tasks;
  std::filesystem::path output;
  bool materialize = false;
  int threads = 0;
};

// Reads keys from a JSON config; relative paths resolve against base_dir.
// Throws ConfigError on unknown keys or wrong types.
RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

// Method/parameter compatibility, checked before any heavy work.
void check_config(const RunConfig& config);

}  // namespace sift::cli
