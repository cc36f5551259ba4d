#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sift/corpus.hpp"
#include "sift/similarity.hpp"

namespace sift {

// How a pick invalidates the picked index. kGlobal removes it for every
// query; kLiteral only for the query that picked it, which lets the same
// index be selected again. kLiteral exists to measure that difference.
enum class RemovalMode { kGlobal, kLiteral };

struct RoundRobinResult {
  std::vector<PoolIndex> selected;
  // Picks contributed by each lane (query or task), in lane order.
  std::vector<std::size_t> contributions;
  // Candidates a lane passed over because another lane already took them.
  std::vector<std::size_t> skips;
};

// Cycles through the query lists in order; each query takes its best index
// not yet selected. n larger than the pool selects the whole pool. Throws
// DataError when a truncated list runs out before n is reached.
RoundRobinResult round_robin_single(std::span<const TopKList> lists, std::size_t n,
                                    RemovalMode mode = RemovalMode::kGlobal);

struct TaskScoreEntry {
  PoolIndex index = 0;
  float score = 0.0f;
  std::size_t best_query = 0;  // position of the query that achieved the max
};

// Per-task max-over-queries scores, best first.
struct TaskScoreTable {
  std::string task_id;
  std::size_t pool_size = 0;
  std::vector<TaskScoreEntry> entries;
  // Leading entries whose relative order is exact. Indices missing from every
  // query list can only score at or below the weakest list cutoff, so entries
  // strictly above it are certified; the rest may be out of order.
  std::size_t certified = 0;

  bool complete() const { return entries.size() == pool_size; }
};

// Builds one table per task, in input order.
std::vector<TaskScoreTable> aggregate_task_scores(
    const std::vector<std::pair<std::string, std::vector<TopKList>>>& per_task);

// Round-robin over tasks using each task's certified prefix. Indices already
// taken by an earlier task are skipped. Throws DataError naming the task that
// runs out.
RoundRobinResult round_robin_multitask(std::span<const TaskScoreTable> tables, std::size_t n);

struct MeanMaxOptions {
  // Score used for an index missing from a task's table. Unset means the
  // lowest score observed in that table.
  std::optional<double> floor;
};

struct MeanMaxResult {
  std::vector<PoolIndex> selected;
  // True when any table was sparse, in which case floor values stood in for
  // real scores.
  bool approximate = false;
};

// Averages task scores per index over indices present in at least one table
// and keeps the n best, ties to the lower index.
MeanMaxResult mean_max_select(std::span<const TaskScoreTable> tables, std::size_t n,
                              const MeanMaxOptions& options = {});

}  // namespace sift
