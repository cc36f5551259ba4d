#include "sift/scorers.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "sift/error.hpp"
#include "sift/io.hpp"
#include "sift/rng.hpp"

namespace sift {

std::string_view to_string(ScoreMethod method) {
  switch (method) {
    case ScoreMethod::kPerplexity: return "perplexity";
    case ScoreMethod::kPerplexityResponse: return "perplexity_response";
    case ScoreMethod::kIfd: return "ifd";
  }
  return "perplexity";
}

ScalarScoreTable perplexity_scores(std::span<const LossRecord> losses, bool response_only) {
  ScalarScoreTable t;
  t.method = response_only ? ScoreMethod::kPerplexityResponse : ScoreMethod::kPerplexity;
  t.normalization = response_only ? "answer_cond_nll_sum / answer_token_count"
                                  : "full_nll_sum / full_token_count";
  t.scores.resize(losses.size());
  const auto count = static_cast<std::int64_t>(losses.size());
  std::int64_t first_bad = count;
#pragma omp parallel for schedule(static) reduction(min : first_bad)
  for (std::int64_t i = 0; i < count; ++i) {
    const LossRecord& r = losses[i];
    const std::uint32_t tokens = response_only ? r.answer_token_count : r.full_token_count;
    const double sum = response_only ? r.answer_cond_nll_sum : r.full_nll_sum;
    if (tokens == 0 || !std::isfinite(sum)) {
      first_bad = std::min(first_bad, i);
      continue;
    }
    t.scores[i] = {static_cast<PoolIndex>(i), sum / tokens};
  }
  if (first_bad < count) {
    throw DataError("pool index " + std::to_string(first_bad) +
                    ": zero token count or non-finite loss, perplexity undefined");
  }
  return t;
}

ScalarScoreTable ifd_scores(std::span<const LossRecord> losses) {
  ScalarScoreTable t;
  t.method = ScoreMethod::kIfd;
  t.normalization = "(answer_cond_nll_sum / answer_token_count) / "
                    "(answer_uncond_nll_sum / answer_token_count)";
  for (std::size_t i = 0; i < losses.size(); ++i) {
    const LossRecord& r = losses[i];
    if (r.answer_token_count == 0) {
      t.excluded.push_back({i, "no answer tokens"});
      continue;
    }
    if (!(r.answer_uncond_nll_sum > 0.0) || !std::isfinite(r.answer_cond_nll_sum) ||
        !std::isfinite(r.answer_uncond_nll_sum)) {
      t.excluded.push_back({i, "zero or non-finite unconditional answer loss"});
      continue;
    }
    const double n = r.answer_token_count;
    t.scores.push_back({i, (r.answer_cond_nll_sum / n) / (r.answer_uncond_nll_sum / n)});
  }
  return t;
}

namespace {

bool higher_first(const ScoredIndex& a, const ScoredIndex& b) {
  return a.score > b.score || (a.score == b.score && a.index < b.index);
}

bool lower_first(const ScoredIndex& a, const ScoredIndex& b) {
  return a.score < b.score || (a.score == b.score && a.index < b.index);
}

void require_n(std::size_t n, std::size_t available, std::string_view what) {
  if (n > available) {
    throw DataError("cannot select " + std::to_string(n) + " samples: only " +
                    std::to_string(available) + " " + std::string(what));
  }
}

std::vector<PoolIndex> best_n(std::vector<ScoredIndex> items, std::size_t n) {
  std::partial_sort(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n), items.end(),
                    higher_first);
  std::vector<PoolIndex> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = items[i].index;
  return out;
}

}  // namespace

std::vector<PoolIndex> select_top_ppl(const ScalarScoreTable& table, std::size_t n) {
  require_n(n, table.scores.size(), "scored samples");
  return best_n(table.scores, n);
}

std::vector<PoolIndex> select_mid_ppl(const ScalarScoreTable& table, std::size_t n) {
  const std::size_t size = table.scores.size();
  require_n(n, size, "scored samples");
  auto items = table.scores;
  std::sort(items.begin(), items.end(), lower_first);
  const std::size_t offset = (size - n) / 2;
  std::vector<PoolIndex> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = items[offset + i].index;
  return out;
}

std::vector<PoolIndex> select_ifd(const ScalarScoreTable& table, std::size_t n,
                                  bool filter_ge_one) {
  std::vector<ScoredIndex> eligible;
  eligible.reserve(table.scores.size());
  for (const auto& s : table.scores) {
    if (!filter_ge_one || s.score < 1.0) eligible.push_back(s);
  }
  require_n(n, eligible.size(), filter_ge_one ? "eligible samples with IFD < 1" : "scored samples");
  return best_n(std::move(eligible), n);
}

std::vector<PoolIndex> select_length(std::span<const std::uint32_t> token_counts, std::size_t n) {
  require_n(n, token_counts.size(), "samples in the pool");
  std::vector<ScoredIndex> items(token_counts.size());
  for (std::size_t i = 0; i < items.size(); ++i) items[i] = {i, static_cast<double>(token_counts[i])};
  return best_n(std::move(items), n);
}

std::vector<PoolIndex> random_select(std::size_t pool_size, std::size_t n, std::uint64_t seed) {
  require_n(n, pool_size, "samples in the pool");
  std::vector<PoolIndex> idx(pool_size);
  std::iota(idx.begin(), idx.end(), PoolIndex{0});
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + rng.below(pool_size - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

std::map<std::string, std::size_t> balanced_budgets(const std::map<std::string, std::size_t>& sizes,
                                                    std::size_t n) {
  std::size_t total = 0;
  for (const auto& [_, s] : sizes) total += s;
  require_n(n, total, "samples in the pool");

  std::map<std::string, std::size_t> budget;
  std::vector<std::string> active;
  for (const auto& [name, _] : sizes) active.push_back(name);  // ascending name order
  std::size_t remaining = n;

  while (!active.empty()) {
    const std::size_t share = remaining / active.size();
    const std::size_t extra = remaining % active.size();
    std::vector<std::string> still_active;
    bool exhausted_any = false;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t want = share + (i < extra ? 1 : 0);
      const std::size_t have = sizes.at(active[i]);
      if (have < want) {
        budget[active[i]] = have;
        remaining -= have;
        exhausted_any = true;
      } else {
        still_active.push_back(active[i]);
      }
    }
    if (!exhausted_any) {
      for (std::size_t i = 0; i < active.size(); ++i) {
        budget[active[i]] = share + (i < extra ? 1 : 0);
      }
      break;
    }
    active = std::move(still_active);
  }
  for (const auto& [name, _] : sizes) budget.try_emplace(name, 0);
  return budget;
}

std::vector<PoolIndex> balanced_random_select(const DataPool& pool, std::size_t n,
                                              std::uint64_t seed) {
  require_n(n, pool.size(), "samples in the pool");
  std::map<std::string, std::vector<PoolIndex>> by_source;
  for (const auto& s : pool.samples) by_source[s.source].push_back(s.pool_index);
  std::map<std::string, std::size_t> sizes;
  for (const auto& [name, members] : by_source) sizes[name] = members.size();
  const auto budgets = balanced_budgets(sizes, n);

  Rng rng(seed);
  std::vector<PoolIndex> out;
  out.reserve(n);
  for (auto& [name, members] : by_source) {
    const std::size_t take = budgets.at(name);
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + rng.below(members.size() - i);
      std::swap(members[i], members[j]);
      out.push_back(members[i]);
    }
  }
  return out;
}

void write_score_table_tsv(const ScalarScoreTable& table, const std::filesystem::path& path) {
  AtomicFile out(path);
  out.write("pool_index\tscore\tstatus\n");
  std::vector<std::pair<PoolIndex, std::string>> rows;
  rows.reserve(table.scores.size() + table.excluded.size());
  char buf[64];
  for (const auto& s : table.scores) {
    std::snprintf(buf, sizeof(buf), "%.17g", s.score);
    rows.emplace_back(s.index, std::to_string(s.index) + "\t" + buf + "\tok\n");
  }
  for (const auto& e : table.excluded) {
    rows.emplace_back(e.index, std::to_string(e.index) + "\t\texcluded: " + e.reason + "\n");
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [_, line] : rows) out.write(line);
  out.commit();
}

void write_score_table(const ScalarScoreTable& table, const std::filesystem::path& path) {
  AtomicFile out(path);
  const RecordType type =
      table.method == ScoreMethod::kIfd ? RecordType::kIfdScores : RecordType::kPerplexityScores;
  std::array<std::byte, kShardHeaderSize> header{};
  encode_header({type, 0, table.scores.size(), 1}, header);
  out.write(header);
  for (const auto& s : table.scores) {
    out.write_pod<std::uint64_t>(s.index);
    out.write_pod<double>(s.score);
  }
  out.commit();
}

ScalarScoreTable read_score_table(const std::filesystem::path& path) {
  const MappedFile file(path);
  const auto bytes = file.bytes();
  const ShardHeader h = decode_header(bytes, path.string());
  if (h.type != RecordType::kIfdScores && h.type != RecordType::kPerplexityScores) {
    throw DataError(path.string() + ": not a score table");
  }
  const std::size_t expected = kShardHeaderSize + h.count * 16;
  if (bytes.size() != expected) {
    throw DataError(path.string() + ": payload size " + std::to_string(bytes.size()) +
                    " does not match " + std::to_string(expected));
  }
  ScalarScoreTable t;
  t.method = h.type == RecordType::kIfdScores ? ScoreMethod::kIfd : ScoreMethod::kPerplexity;
  t.scores.resize(h.count);
  const std::byte* p = bytes.data() + kShardHeaderSize;
  for (auto& s : t.scores) {
    std::memcpy(&s.index, p, 8);
    std::memcpy(&s.score, p + 8, 8);
    p += 16;
  }
  return t;
}

}  // namespace sift
