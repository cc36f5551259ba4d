#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sift/corpus.hpp"
#include "sift/feature_store.hpp"

namespace sift {

enum class ScoreMethod {
  kPerplexity,          // mean NLL over the full rendered sample
  kPerplexityResponse,  // mean NLL over answer tokens given the prompt
  kIfd,                 // answer_cond_nll / answer_uncond_nll
};

std::string_view to_string(ScoreMethod method);

struct ScoredIndex {
  PoolIndex index = 0;
  double score = 0.0;

  bool operator==(const ScoredIndex&) const = default;
};

struct ExcludedIndex {
  PoolIndex index = 0;
  std::string reason;
};

struct ScalarScoreTable {
  ScoreMethod method = ScoreMethod::kPerplexity;
  std::string normalization;
  std::vector<ScoredIndex> scores;  // ascending pool index
  std::vector<ExcludedIndex> excluded;
};

// Throws DataError naming the first record with a zero token count.
ScalarScoreTable perplexity_scores(std::span<const LossRecord> losses, bool response_only = false);

// Records with no answer tokens or zero unconditional loss are excluded, not fatal.
ScalarScoreTable ifd_scores(std::span<const LossRecord> losses);

// All selectors return exactly n distinct indices or throw DataError. Ties in
// score always go to the lower pool index.

// n highest scores, best first.
std::vector<PoolIndex> select_top_ppl(const ScalarScoreTable& table, std::size_t n);

// Window of n in ascending score order starting at floor((size - n) / 2).
// Returned in ascending score order.
std::vector<PoolIndex> select_mid_ppl(const ScalarScoreTable& table, std::size_t n);

// Optionally drops scores >= 1, then the n highest remaining, best first.
std::vector<PoolIndex> select_ifd(const ScalarScoreTable& table, std::size_t n,
                                  bool filter_ge_one = true);

// n longest samples, longest first.
std::vector<PoolIndex> select_length(std::span<const std::uint32_t> token_counts, std::size_t n);

// Uniform sample without replacement (partial Fisher-Yates on Rng), in draw order.
std::vector<PoolIndex> random_select(std::size_t pool_size, std::size_t n, std::uint64_t seed);

// Per-source sample counts for balanced selection: equal shares, sources
// smaller than their share give everything and the shortfall is re-split
// among the rest until every budget fits. Remainders go one each to sources
// in ascending name order.
std::map<std::string, std::size_t> balanced_budgets(const std::map<std::string, std::size_t>& sizes,
                                                    std::size_t n);

// Sources are visited in ascending name order and sampled uniformly without
// replacement from one generator seeded with `seed`.
std::vector<PoolIndex> balanced_random_select(const DataPool& pool, std::size_t n,
                                              std::uint64_t seed);

// TSV "pool_index<TAB>score<TAB>status" with excluded rows marked.
void write_score_table_tsv(const ScalarScoreTable& table, const std::filesystem::path& path);
// Binary: shared header, then per row u64 pool_index, f64 score (excluded rows omitted).
void write_score_table(const ScalarScoreTable& table, const std::filesystem::path& path);
ScalarScoreTable read_score_table(const std::filesystem::path& path);

}  // namespace sift
