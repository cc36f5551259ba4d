#include "sift/selection.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "sift/error.hpp"

namespace sift {

namespace {

struct Lane {
  std::string name;
  std::vector<PoolIndex> order;  // best first
  bool complete = false;
};

RoundRobinResult run_round_robin(const std::vector<Lane>& lanes, std::size_t n,
                                 std::size_t pool_size, RemovalMode mode) {
  RoundRobinResult res;
  res.contributions.assign(lanes.size(), 0);
  res.skips.assign(lanes.size(), 0);
  if (lanes.empty()) throw DataError("round-robin needs at least one query list");
  n = std::min(n, pool_size);
  res.selected.reserve(n);

  std::vector<bool> taken(pool_size, false);
  std::vector<std::size_t> cursor(lanes.size(), 0);
  while (res.selected.size() < n) {
    const std::size_t before = res.selected.size();
    for (std::size_t l = 0; l < lanes.size() && res.selected.size() < n; ++l) {
      const Lane& lane = lanes[l];
      std::size_t& c = cursor[l];
      if (mode == RemovalMode::kGlobal) {
        while (c < lane.order.size() && taken[lane.order[c]]) {
          ++c;
          ++res.skips[l];
        }
      }
      if (c >= lane.order.size()) {
        if (lane.complete && mode == RemovalMode::kGlobal) continue;
        throw DataError(lane.name + " exhausted its candidate list after " +
                        std::to_string(lane.order.size()) + " entries with " +
                        std::to_string(res.selected.size()) + " of " + std::to_string(n) +
                        " selected; rerun with a larger k");
      }
      const PoolIndex pick = lane.order[c++];
      if (pick >= pool_size) {
        throw DataError(lane.name + ": pool index " + std::to_string(pick) + " out of range");
      }
      taken[pick] = true;
      res.selected.push_back(pick);
      ++res.contributions[l];
    }
    if (res.selected.size() == before) {
      throw DataError("round-robin made no progress with " + std::to_string(before) + " of " +
                      std::to_string(n) + " selected; candidate lists are inconsistent");
    }
  }
  return res;
}

}  // namespace

RoundRobinResult round_robin_single(std::span<const TopKList> lists, std::size_t n,
                                    RemovalMode mode) {
  if (lists.empty()) throw DataError("round-robin needs at least one query list");
  if (n == 0) throw ConfigError("n must be at least 1");
  const std::size_t pool_size = lists.front().pool_size;
  std::vector<Lane> lanes(lists.size());
  for (std::size_t q = 0; q < lists.size(); ++q) {
    if (lists[q].pool_size != pool_size) {
      throw DataError("query lists disagree on pool size");
    }
    lanes[q].name = "query " + std::to_string(lists[q].query_id);
    lanes[q].complete = lists[q].complete();
    lanes[q].order.reserve(lists[q].entries.size());
    for (const auto& e : lists[q].entries) lanes[q].order.push_back(e.index);
  }
  return run_round_robin(lanes, n, pool_size, mode);
}

std::vector<TaskScoreTable> aggregate_task_scores(
    const std::vector<std::pair<std::string, std::vector<TopKList>>>& per_task) {
  std::vector<TaskScoreTable> tables(per_task.size());
  const auto ntasks = static_cast<std::int64_t>(per_task.size());
  std::vector<std::string> errors(per_task.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t t = 0; t < ntasks; ++t) {
    const auto& [task_id, lists] = per_task[t];
    TaskScoreTable& table = tables[t];
    table.task_id = task_id;
    if (lists.empty()) {
      errors[t] = "task " + task_id + " has no query lists";
      continue;
    }
    table.pool_size = lists.front().pool_size;
    std::unordered_map<PoolIndex, std::size_t> slot;
    bool all_complete = true;
    float cutoff = -std::numeric_limits<float>::infinity();
    for (std::size_t q = 0; q < lists.size(); ++q) {
      const TopKList& list = lists[q];
      if (!list.complete()) {
        all_complete = false;
        if (!list.entries.empty()) cutoff = std::max(cutoff, list.entries.back().score);
      }
      for (const auto& e : list.entries) {
        auto [it, inserted] = slot.try_emplace(e.index, table.entries.size());
        if (inserted) {
          table.entries.push_back({e.index, e.score, q});
        } else if (e.score > table.entries[it->second].score) {
          // Strictly greater keeps the earliest query on ties.
          table.entries[it->second].score = e.score;
          table.entries[it->second].best_query = q;
        }
      }
    }
    std::sort(table.entries.begin(), table.entries.end(),
              [](const TaskScoreEntry& a, const TaskScoreEntry& b) {
                return ranks_before({a.index, a.score}, {b.index, b.score});
              });
    if (all_complete) {
      table.certified = table.entries.size();
    } else {
      table.certified = static_cast<std::size_t>(
          std::find_if(table.entries.begin(), table.entries.end(),
                       [cutoff](const TaskScoreEntry& e) { return !(e.score > cutoff); }) -
          table.entries.begin());
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw DataError(e);
  }
  return tables;
}

RoundRobinResult round_robin_multitask(std::span<const TaskScoreTable> tables, std::size_t n) {
  if (tables.empty()) throw DataError("multi-task round-robin needs at least one task");
  if (n == 0) throw ConfigError("n must be at least 1");
  const std::size_t pool_size = tables.front().pool_size;
  std::vector<Lane> lanes(tables.size());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (tables[t].pool_size != pool_size) throw DataError("task tables disagree on pool size");
    lanes[t].name = "task " + tables[t].task_id;
    lanes[t].complete = tables[t].complete();
    lanes[t].order.reserve(tables[t].certified);
    for (std::size_t i = 0; i < tables[t].certified; ++i) {
      lanes[t].order.push_back(tables[t].entries[i].index);
    }
  }
  return run_round_robin(lanes, n, pool_size, RemovalMode::kGlobal);
}

MeanMaxResult mean_max_select(std::span<const TaskScoreTable> tables, std::size_t n,
                              const MeanMaxOptions& options) {
  if (tables.empty()) throw DataError("mean-max needs at least one task");
  MeanMaxResult res;

  std::vector<double> floors(tables.size());
  for (std::size_t t = 0; t < tables.size(); ++t) {
    if (!tables[t].complete()) res.approximate = true;
    if (options.floor) {
      floors[t] = *options.floor;
    } else {
      double lo = std::numeric_limits<double>::infinity();
      for (const auto& e : tables[t].entries) lo = std::min(lo, static_cast<double>(e.score));
      floors[t] = tables[t].entries.empty() ? 0.0 : lo;
    }
  }

  // Dense per-index score rows, summed in task order for a fixed rounding order.
  std::unordered_map<PoolIndex, std::vector<double>> per_index;
  for (std::size_t t = 0; t < tables.size(); ++t) {
    for (const auto& e : tables[t].entries) {
      auto [it, inserted] = per_index.try_emplace(e.index);
      if (inserted) it->second = floors;
      it->second[t] = e.score;
    }
  }
  if (n > per_index.size()) {
    throw DataError("cannot select " + std::to_string(n) + " samples: only " +
                    std::to_string(per_index.size()) + " indices carry a task score");
  }

  struct Item {
    PoolIndex index;
    double mean;
  };
  std::vector<Item> items;
  items.reserve(per_index.size());
  for (const auto& [idx, row] : per_index) {
    double sum = 0.0;
    for (double s : row) sum += s;
    items.push_back({idx, sum / static_cast<double>(tables.size())});
  }
  auto better = [](const Item& a, const Item& b) {
    return a.mean > b.mean || (a.mean == b.mean && a.index < b.index);
  };
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(),
                    better);
  res.selected.reserve(n);
  for (std::size_t i = 0; i < n; ++i) res.selected.push_back(items[i].index);
  return res;
}

}  // namespace sift
