#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "sift/error.hpp"
#include "sift/scorers.hpp"
#include "support.hpp"

using namespace sift;
using sift::test::TempDir;

namespace {

ScalarScoreTable table_of(std::vector<double> scores) {
  ScalarScoreTable t;
  for (std::size_t i = 0; i < scores.size(); ++i) t.scores.push_back({i, scores[i]});
  return t;
}

// Indices sorted by (score desc, index asc), first n.
std::vector<PoolIndex> argsort_desc(const std::vector<double>& s, std::size_t n) {
  std::vector<PoolIndex> idx(s.size());
  std::iota(idx.begin(), idx.end(), PoolIndex{0});
  std::stable_sort(idx.begin(), idx.end(), [&](PoolIndex a, PoolIndex b) { return s[a] > s[b]; });
  idx.resize(n);
  return idx;
}

std::set<PoolIndex> as_set(const std::vector<PoolIndex>& v) { return {v.begin(), v.end()}; }

std::vector<double> random_scores(std::mt19937_64& gen, std::size_t n, int distinct = 0) {
  std::vector<double> s(n);
  if (distinct > 0) {
    std::uniform_int_distribution<int> d(0, distinct - 1);
    for (auto& x : s) x = 0.1 * d(gen);
  } else {
    std::uniform_real_distribution<double> d(0.01, 5.0);
    for (auto& x : s) x = d(gen);
  }
  return s;
}

}  // namespace

TEST_CASE("perplexity_scores: examples") {
  const std::vector<LossRecord> losses{{5, 2, 3, 10.0, 0, 0}, {2, 1, 1, 6.0, 0, 0}, {4, 1, 3, 6.0, 0, 0}};
  const auto t = perplexity_scores(losses);
  CHECK(t.scores[0].score == 2.0);
  CHECK(t.scores[1].score == 2 * t.scores[2].score);
  CHECK_THROWS_AS(perplexity_scores(std::vector<LossRecord>{{0, 0, 0, 1, 0, 0}}), DataError);

  const auto r = perplexity_scores(std::vector<LossRecord>{{5, 2, 3, 10.0, 1.5, 0}}, true);
  CHECK(r.method == ScoreMethod::kPerplexityResponse);
  CHECK(r.scores[0].score == 0.5);
}

TEST_CASE("perplexity_scores: matches a resum of raw per-token losses") {
  std::mt19937_64 gen(30);
  std::uniform_int_distribution<int> len(1, 300);
  std::exponential_distribution<double> nll(0.7);
  std::vector<LossRecord> losses;
  std::vector<std::vector<double>> tokens;
  for (int i = 0; i < 100; ++i) {
    tokens.emplace_back(len(gen));
    for (auto& x : tokens.back()) x = nll(gen);
    LossRecord r;
    r.full_token_count = static_cast<std::uint32_t>(tokens.back().size());
    for (double x : tokens.back()) r.full_nll_sum += x;
    losses.push_back(r);
  }
  const auto t = perplexity_scores(losses);
  for (int i = 0; i < 100; ++i) {
    long double s = 0;
    for (double x : tokens[i]) s += x;
    CHECK(t.scores[i].score == doctest::Approx(double(s / tokens[i].size())).epsilon(1e-12));
  }
}

TEST_CASE("select_top_ppl: examples and oracle") {
  CHECK(select_top_ppl(table_of({1, 9, 5}), 1) == std::vector<PoolIndex>{1});
  CHECK(as_set(select_top_ppl(table_of({1, 9, 5}), 3)) == std::set<PoolIndex>{0, 1, 2});
  CHECK_THROWS_AS(select_top_ppl(table_of({1, 9, 5}), 4), DataError);
  std::mt19937_64 gen(31);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_scores(gen, 50, trial % 2 ? 6 : 0);
    CHECK(select_top_ppl(table_of(s), 10) == argsort_desc(s, 10));
  }
}

TEST_CASE("select_mid_ppl: window rule") {
  // Scores 1..10 stored in shuffled order.
  const std::vector<double> s{7, 3, 10, 1, 5, 9, 2, 6, 4, 8};
  const auto picked = select_mid_ppl(table_of(s), 4);
  std::set<double> values;
  for (PoolIndex i : picked) values.insert(s[i]);
  CHECK(values == std::set<double>{4, 5, 6, 7});
  CHECK(as_set(select_mid_ppl(table_of(s), 10)).size() == 10);
  CHECK_THROWS_AS(select_mid_ppl(table_of(s), 11), DataError);

  const std::vector<double> odd{9, 1, 5, 3, 7};
  CHECK(select_mid_ppl(table_of(odd), 1) == std::vector<PoolIndex>{2});
}

TEST_CASE("ifd_scores: ratio, exclusions and rescaling") {
  const std::vector<LossRecord> losses{
      {10, 5, 4, 0, 2.0, 4.0},   // 0.5
      {10, 5, 4, 0, 3.0, 3.0},   // 1.0
      {10, 5, 0, 0, 3.0, 3.0},   // no answer tokens
      {10, 5, 4, 0, 3.0, 0.0},   // zero unconditional loss
  };
  const auto t = ifd_scores(losses);
  REQUIRE(t.scores.size() == 2);
  CHECK(t.scores[0] == ScoredIndex{0, 0.5});
  CHECK(t.scores[1] == ScoredIndex{1, 1.0});
  REQUIRE(t.excluded.size() == 2);
  CHECK(t.excluded[0].index == 2);
  CHECK(t.excluded[1].index == 3);
}

TEST_CASE("select_ifd: filter behavior") {
  const auto t = table_of({0.9, 1.2, 0.8});
  CHECK(select_ifd(t, 2) == std::vector<PoolIndex>{0, 2});
  CHECK(select_ifd(t, 2, false) == std::vector<PoolIndex>{1, 0});
  CHECK_THROWS_AS(select_ifd(table_of({1.0, 1.5}), 1), DataError);
}

TEST_CASE("select_length: examples and oracle") {
  CHECK(select_length(std::vector<std::uint32_t>{5, 20, 7}, 1) == std::vector<PoolIndex>{1});
  CHECK(select_length(std::vector<std::uint32_t>{4, 4, 4, 4}, 2) == std::vector<PoolIndex>{0, 1});
  std::mt19937_64 gen(32);
  std::uniform_int_distribution<std::uint32_t> d(1, 40);
  std::vector<std::uint32_t> lengths(100);
  for (auto& x : lengths) x = d(gen);
  std::vector<double> as_double(lengths.begin(), lengths.end());
  CHECK(select_length(lengths, 30) == argsort_desc(as_double, 30));
}

TEST_CASE("monotone transforms leave top-ppl and IFD selections unchanged") {
  std::mt19937_64 gen(33);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scores(gen, 40, trial % 3 == 0 ? 8 : 0);
    const std::size_t n = 1 + trial % 15;
    const auto base_top = select_top_ppl(table_of(s), n);
    std::vector<double> a(s), b(s);
    for (auto& x : a) x = 2 * x + 3;
    for (auto& x : b) x = x * x * x;
    CHECK(select_top_ppl(table_of(a), n) == base_top);
    CHECK(select_top_ppl(table_of(b), n) == base_top);
    CHECK(select_ifd(table_of(a), n, false) == select_ifd(table_of(s), n, false));
    CHECK(select_ifd(table_of(b), n, false) == select_ifd(table_of(s), n, false));
  }
}

TEST_CASE("ifd_scores: invariant under rescaling both losses") {
  std::mt19937_64 gen(34);
  std::uniform_real_distribution<double> d(0.1, 50);
  std::vector<LossRecord> losses(200);
  for (auto& r : losses) r = {100, 40, 60, 0, d(gen), d(gen)};
  const auto base = ifd_scores(losses);
  for (double c : {0.5, 2.0, 10.0}) {
    auto scaled = losses;
    for (auto& r : scaled) {
      r.answer_cond_nll_sum *= c;
      r.answer_uncond_nll_sum *= c;
    }
    const auto t = ifd_scores(scaled);
    for (std::size_t i = 0; i < t.scores.size(); ++i) {
      CHECK(t.scores[i].score == doctest::Approx(base.scores[i].score).epsilon(1e-14));
    }
    CHECK(select_ifd(t, 50) == select_ifd(base, 50));
  }
}

TEST_CASE("random_select: permutation, determinism and errors") {
  const auto all = random_select(50, 50, 3);
  CHECK(as_set(all).size() == 50);
  CHECK(random_select(1000, 100, 42) == random_select(1000, 100, 42));
  CHECK(random_select(1000, 100, 42) != random_select(1000, 100, 43));
  CHECK_THROWS_AS(random_select(5, 6, 1), DataError);
}

TEST_CASE("random_select: frequencies on a 10-element pool") {
  std::vector<int> counts(10, 0);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) ++counts[random_select(10, 1, seed)[0]];
  const double expected = 1000.0;
  const double sd = std::sqrt(10000 * 0.1 * 0.9);
  double chi2 = 0;
  for (int c : counts) {
    CHECK(std::abs(c - expected) < 4 * sd);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 9 degrees of freedom; 27.88 is the 0.999 quantile.
  CHECK(chi2 < 27.88);
}

TEST_CASE("balanced_budgets: examples") {
  using M = std::map<std::string, std::size_t>;
  CHECK(balanced_budgets({{"A", 4}, {"B", 100}, {"C", 100}}, 30) == M{{"A", 4}, {"B", 13}, {"C", 13}});
  CHECK(balanced_budgets({{"A", 50}, {"B", 50}}, 10) == M{{"A", 5}, {"B", 5}});
  CHECK(balanced_budgets({{"A", 1}, {"B", 1}}, 2) == M{{"A", 1}, {"B", 1}});
  CHECK(balanced_budgets({{"A", 10}, {"B", 10}, {"C", 10}}, 7) == M{{"A", 3}, {"B", 2}, {"C", 2}});
  CHECK_THROWS_AS(balanced_budgets({{"A", 1}}, 2), DataError);
}

TEST_CASE("balanced_budgets: properties on 500 random configurations") {
  std::mt19937_64 gen(35);
  for (int trial = 0; trial < 500; ++trial) {
    std::map<std::string, std::size_t> sizes;
    const int sources = std::uniform_int_distribution<int>(1, 8)(gen);
    std::size_t total = 0;
    for (int s = 0; s < sources; ++s) {
      const std::size_t sz = std::uniform_int_distribution<std::size_t>(1, 60)(gen);
      sizes["s" + std::to_string(s)] = sz;
      total += sz;
    }
    const std::size_t n = std::uniform_int_distribution<std::size_t>(1, total)(gen);
    const auto b = balanced_budgets(sizes, n);
    std::size_t sum = 0;
    std::size_t lo = SIZE_MAX, hi = 0;
    for (const auto& [name, c] : b) {
      sum += c;
      CHECK(c <= sizes.at(name));
      if (c < sizes.at(name)) {
        lo = std::min(lo, c);
        hi = std::max(hi, c);
      }
    }
    CHECK(sum == n);
    // Sources that were not exhausted share the budget within one sample, and
    // every exhausted source got less than any of them.
    if (hi > 0) CHECK(hi - lo <= 1);
    for (const auto& [name, c] : b) {
      if (c == sizes.at(name) && lo != SIZE_MAX) CHECK(c <= hi + 1);
    }
  }
}

TEST_CASE("balanced_random_select: counts, uniqueness and determinism") {
  std::vector<Sample> samples;
  for (int i = 0; i < 204; ++i) {
    const std::string src = i < 4 ? "A" : (i % 2 ? "B" : "C");
    samples.push_back(sift::test::make_sample(0, src, std::to_string(i), "x"));
  }
  const DataPool pool = sift::test::make_pool(samples);
  const auto picked = balanced_random_select(pool, 30, 9);
  CHECK(as_set(picked).size() == 30);
  std::map<std::string, std::size_t> counts;
  for (PoolIndex i : picked) ++counts[pool.samples[i].source];
  CHECK(counts == std::map<std::string, std::size_t>{{"A", 4}, {"B", 13}, {"C", 13}});
  CHECK(balanced_random_select(pool, 30, 9) == picked);
}

TEST_CASE("score tables: TSV and binary output") {
  TempDir dir;
  const auto t = ifd_scores(std::vector<LossRecord>{{10, 5, 4, 0, 2.0, 4.0}, {10, 5, 0, 0, 1, 1}});
  write_score_table_tsv(t, dir / "s.tsv");
  CHECK(sift::test::read_file(dir / "s.tsv") ==
        "pool_index\tscore\tstatus\n0\t0.5\tok\n1\t\texcluded: no answer tokens\n");
  write_score_table(t, dir / "s.bin");
  const auto back = read_score_table(dir / "s.bin");
  CHECK(back.method == ScoreMethod::kIfd);
  CHECK(back.scores == t.scores);
}
