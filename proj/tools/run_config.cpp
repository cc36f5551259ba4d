#include "run_config.hpp"

#include <set>

#include "sift/error.hpp"

namespace sift::cli {

namespace {

constexpr std::pair<Method, std::string_view> kMethodNames[] = {
    {Method::kRandom, "random"},       {Method::kBalancedRandom, "balanced_random"},
    {Method::kLength, "length"},       {Method::kTopPpl, "top_ppl"},
    {Method::kMidPpl, "mid_ppl"},      {Method::kIfd, "ifd"},
    {Method::kLess, "less"},           {Method::kEmbedding, "embedding"},
    {Method::kRds, "rds"},
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

std::string_view to_string(Method method) {
  for (const auto& [m, name] : kMethodNames) {
    if (m == method) return name;
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  for (const auto& [m, n] : kMethodNames) {
    if (n == name) return m;
  }
  throw ConfigError("unknown method \"" + std::string(name) + "\"");
}

bool is_query_driven(Method method) {
  return method == Method::kLess || method == Method::kEmbedding || method == Method::kRds;
}

RunConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  static const std::set<std::string> kKeys = {
      "pool", "pool_features", "method", "n", "k", "seed", "aggregation", "pooling",
      "ifd_filter", "response_only", "mean_max_floor", "tasks", "output", "materialize",
      "threads"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("unknown config key \"" + key + "\"");
  }
  RunConfig c;
  try {
    if (j.contains("pool")) c.pool = resolve(base_dir, j["pool"].get<std::string>());
    if (j.contains("pool_features")) {
      c.pool_features = resolve(base_dir, j["pool_features"].get<std::string>());
    }
    if (j.contains("method")) c.method = parse_method(j["method"].get<std::string>());
    if (j.contains("n")) c.n = j["n"].get<std::size_t>();
    if (j.contains("k")) c.k = j["k"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("aggregation")) {
      const auto a = j["aggregation"].get<std::string>();
      if (a == "round_robin") c.aggregation = Aggregation::kRoundRobin;
      else if (a == "mean_max") c.aggregation = Aggregation::kMeanMax;
      else throw ConfigError("unknown aggregation \"" + a + "\"");
    }
    if (j.contains("pooling")) {
      const auto& p = j["pooling"];
      if (p.contains("kind")) c.pooling.kind = parse_pooling_kind(p["kind"].get<std::string>());
      if (p.contains("span")) c.pooling.span = parse_pooling_span(p["span"].get<std::string>());
    }
    if (j.contains("ifd_filter")) c.ifd_filter = j["ifd_filter"].get<bool>();
    if (j.contains("response_only")) c.response_only = j["response_only"].get<bool>();
    if (j.contains("mean_max_floor") && !j["mean_max_floor"].is_null()) {
      c.mean_max_floor = j["mean_max_floor"].get<double>();
    }
    if (j.contains("tasks")) {
      for (const auto& t : j["tasks"]) {
        c.tasks.push_back({t.at("id").get<std::string>(),
                           resolve(base_dir, t.at("queries").get<std::string>()),
                           resolve(base_dir, t.at("features").get<std::string>())});
      }
    }
    if (j.contains("output")) c.output = resolve(base_dir, j["output"].get<std::string>());
    if (j.contains("materialize")) c.materialize = j["materialize"].get<bool>();
    if (j.contains("threads")) c.threads = j["threads"].get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

void check_config(const RunConfig& c) {
  if (c.pool.empty()) throw ConfigError("select: pool path is required");
  if (c.output.empty()) throw ConfigError("select: output directory is required");
  if (c.n == 0) throw ConfigError("select: n must be at least 1");
  const bool needs_features = c.method != Method::kRandom && c.method != Method::kBalancedRandom;
  if (needs_features && c.pool_features.empty()) {
    throw ConfigError("select: method " + std::string(to_string(c.method)) +
                      " needs pool_features");
  }
  if (is_query_driven(c.method)) {
    if (c.tasks.empty()) {
      throw ConfigError("select: method " + std::string(to_string(c.method)) +
                        " needs at least one task with queries and features");
    }
    std::set<std::string> ids;
    for (const auto& t : c.tasks) {
      if (!ids.insert(t.id).second) throw ConfigError("select: duplicate task id " + t.id);
    }
  } else if (!c.tasks.empty()) {
    throw ConfigError("select: method " + std::string(to_string(c.method)) +
                      " does not use query tasks");
  }
  if (c.aggregation == Aggregation::kMeanMax && !is_query_driven(c.method)) {
    throw ConfigError("select: mean_max aggregation applies to query-driven methods only");
  }
  if (c.threads < 0) throw ConfigError("select: threads must be non-negative");
}

}  // namespace sift::cli
