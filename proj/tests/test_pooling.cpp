#include <doctest.h>

#include <boost/rational.hpp>
#include <random>

#include "sift/error.hpp"
#include "sift/pooling.hpp"
#include "support.hpp"

using namespace sift;
using Rational = boost::rational<std::int64_t>;

namespace {

HiddenStateRecord record(std::vector<std::vector<float>> rows, TokenSpan prompt, TokenSpan answer) {
  HiddenStateRecord r;
  r.states = FloatMatrix(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), r.states.row(i).begin());
  }
  r.prompt = prompt;
  r.answer = answer;
  return r;
}

HiddenStateRecord random_record(std::mt19937_64& gen, std::uint32_t dim, std::uint32_t max_len) {
  const std::uint32_t L = std::uniform_int_distribution<std::uint32_t>(1, max_len)(gen);
  const std::uint32_t split = std::uniform_int_distribution<std::uint32_t>(0, L)(gen);
  HiddenStateRecord r;
  r.states = sift::test::random_matrix(L, dim, gen);
  r.prompt = {0, split};
  r.answer = {split, L};
  return r;
}

// Σ i·h_i / Σ i over rows [a, b), positions counted from 1, in long double.
std::vector<long double> weighted_oracle(const FloatMatrix& h, std::size_t a, std::size_t b) {
  std::vector<long double> out(h.cols, 0.0L);
  long double total = 0.0L;
  for (std::size_t i = a; i < b; ++i) {
    const long double w = static_cast<long double>(i - a + 1);
    total += w;
    for (std::size_t j = 0; j < h.cols; ++j) out[j] += w * h.row(i)[j];
  }
  for (auto& x : out) x /= total;
  return out;
}

}  // namespace

TEST_CASE("position_weights: small cases") {
  CHECK(position_weights(1) == std::vector<double>{1.0});
  const auto w3 = position_weights(3);
  REQUIRE(w3.size() == 3);
  CHECK(w3[0] == doctest::Approx(1.0 / 6).epsilon(1e-15));
  CHECK(w3[1] == doctest::Approx(2.0 / 6).epsilon(1e-15));
  CHECK(w3[2] == doctest::Approx(3.0 / 6).epsilon(1e-15));
  CHECK_THROWS_AS(position_weights(0), std::domain_error);
  CHECK_THROWS_AS(position_weight_fractions(0), std::domain_error);
}

TEST_CASE("position_weights: exact fractions for L=3 and L=4") {
  const auto f3 = position_weight_fractions(3);
  std::vector<Rational> w;
  for (auto num : f3.numerators) w.emplace_back(static_cast<std::int64_t>(num), static_cast<std::int64_t>(f3.denominator));
  CHECK(w == std::vector<Rational>{Rational(1, 6), Rational(2, 6), Rational(3, 6)});

  const auto f4 = position_weight_fractions(4);
  Rational sum = 0;
  for (auto num : f4.numerators) sum += Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(f4.denominator));
  CHECK((sum == Rational(1)));
}

TEST_CASE("position_weights: sum, positivity, monotonicity and last weight for L up to 4096") {
  for (std::size_t L = 1; L <= 4096; ++L) {
    const auto w = position_weights(L);
    REQUIRE(w.size() == L);
    double sum = 0.0;
    for (std::size_t i = 0; i < L; ++i) {
      sum += w[i];
      if (i > 0 && !(w[i] > w[i - 1])) FAIL("weights not increasing at L=" << L);
      if (!(w[i] > 0.0)) FAIL("non-positive weight at L=" << L);
    }
    if (std::abs(sum - 1.0) >= 1e-6) FAIL("weights sum to " << sum << " at L=" << L);
    if (std::abs(w.back() - 2.0 / (static_cast<double>(L) + 1)) > 1e-15) FAIL("w_L at L=" << L);
  }
}

TEST_CASE("pool: worked 3x2 example") {
  const auto r = record({{1, 0}, {0, 1}, {1, 1}}, {0, 1}, {1, 3});
  const auto p = pool(r, {PoolingKind::kWeighted, PoolingSpan::kFull});
  REQUIRE(p.size() == 2);
  CHECK(std::abs(p[0] - 4.0 / 6) < 1e-6);
  CHECK(std::abs(p[1] - 5.0 / 6) < 1e-6);
  const auto s = reference::pool_serial(r, {PoolingKind::kWeighted, PoolingSpan::kFull});
  CHECK(std::abs(s[0] - 4.0 / 6) < 1e-6);
  CHECK(std::abs(s[1] - 5.0 / 6) < 1e-6);
}

TEST_CASE("pool: identical rows and single tokens are fixed points for every strategy") {
  const auto same = record({{0.5f, -2}, {0.5f, -2}, {0.5f, -2}, {0.5f, -2}}, {0, 2}, {2, 4});
  const auto single = record({{3, 4}}, {0, 0}, {0, 1});
  for (auto kind : {PoolingKind::kWeighted, PoolingKind::kUniform, PoolingKind::kEosOnly}) {
    for (auto span : {PoolingSpan::kFull, PoolingSpan::kPromptOnly, PoolingSpan::kLabelOnly}) {
      const auto p = pool(same, {kind, span});
      CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-6));
      CHECK(p[1] == doctest::Approx(-2).epsilon(1e-6));
    }
    CHECK(pool(single, {kind, PoolingSpan::kFull}) == std::vector<float>{3, 4});
    CHECK(pool(single, {kind, PoolingSpan::kLabelOnly}) == std::vector<float>{3, 4});
  }
}

TEST_CASE("pool: span selection and eos") {
  const auto r = record({{1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}}, {0, 2}, {2, 5});
  CHECK(pool(r, {PoolingKind::kEosOnly, PoolingSpan::kFull})[0] == 5);
  CHECK(pool(r, {PoolingKind::kEosOnly, PoolingSpan::kPromptOnly})[0] == 2);
  CHECK(pool(r, {PoolingKind::kEosOnly, PoolingSpan::kLabelOnly})[0] == 5);
  CHECK(pool(r, {PoolingKind::kUniform, PoolingSpan::kLabelOnly})[0] == doctest::Approx(4.0));
  // Re-indexed positions inside [2, 5): (1*3 + 2*4 + 3*5) / 6.
  CHECK(pool(r, {PoolingKind::kWeighted, PoolingSpan::kLabelOnly})[0] ==
        doctest::Approx(26.0 / 6));
  CHECK(pool(r, {PoolingKind::kWeighted, PoolingSpan::kPromptOnly})[0] ==
        doctest::Approx(5.0 / 3));
}

TEST_CASE("pool: empty span names the sample") {
  const auto r = record({{1, 0}, {2, 0}}, {0, 2}, {2, 2});
  try {
    pool(r, {PoolingKind::kWeighted, PoolingSpan::kLabelOnly}, 17);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("sample 17") != std::string::npos);
  }
  std::vector<HiddenStateRecord> batch{record({{1}}, {0, 1}, {1, 1}), r};
  CHECK_THROWS_WITH_AS(pool_all(batch, {PoolingKind::kUniform, PoolingSpan::kLabelOnly}, 40),
                       doctest::Contains("sample 40"), DataError);
}

TEST_CASE("pool: strategy names parse and print") {
  for (auto kind : {PoolingKind::kWeighted, PoolingKind::kUniform, PoolingKind::kEosOnly}) {
    CHECK(parse_pooling_kind(to_string(kind)) == kind);
  }
  for (auto span : {PoolingSpan::kFull, PoolingSpan::kPromptOnly, PoolingSpan::kLabelOnly}) {
    CHECK(parse_pooling_span(to_string(span)) == span);
  }
  CHECK_THROWS_AS(parse_pooling_kind("max"), ConfigError);
  CHECK_THROWS_AS(parse_pooling_span("all"), ConfigError);
}

TEST_CASE("pool: convex hull bound and oracle agreement on 1000 random matrices") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto r = random_record(gen, 1 + trial % 9, 40);
    const std::size_t L = r.states.rows;
    for (auto kind : {PoolingKind::kWeighted, PoolingKind::kUniform}) {
      const auto p = pool(r, {kind, PoolingSpan::kFull});
      for (std::size_t j = 0; j < r.states.cols; ++j) {
        float lo = r.states.row(0)[j], hi = lo;
        for (std::size_t i = 1; i < L; ++i) {
          lo = std::min(lo, r.states.row(i)[j]);
          hi = std::max(hi, r.states.row(i)[j]);
        }
        if (p[j] < lo - 1e-6f || p[j] > hi + 1e-6f) FAIL("outside hull at trial " << trial);
      }
    }
    const auto w = pool(r, {PoolingKind::kWeighted, PoolingSpan::kFull});
    const auto o = weighted_oracle(r.states, 0, L);
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (std::abs(static_cast<long double>(w[j]) - o[j]) > 1e-5L) FAIL("oracle at trial " << trial);
    }
  }
}

TEST_CASE("pool: span renormalization equals position weights over the sub-span") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto r = random_record(gen, 4, 30);
    for (auto span : {PoolingSpan::kPromptOnly, PoolingSpan::kLabelOnly}) {
      const TokenSpan s = select_span(r, span);
      if (s.empty()) continue;
      const auto p = pool(r, {PoolingKind::kWeighted, span});
      const auto w = position_weights(s.size());
      for (std::size_t j = 0; j < 4; ++j) {
        double expect = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) expect += w[i] * r.states.row(s.begin + i)[j];
        CHECK(p[j] == doctest::Approx(expect).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("pool: uniform equals weighted with 1/L substituted") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = random_record(gen, 5, 25);
    const auto u = pool(r, {PoolingKind::kUniform, PoolingSpan::kFull});
    const double L = static_cast<double>(r.states.rows);
    for (std::size_t j = 0; j < 5; ++j) {
      double expect = 0.0;
      for (std::size_t i = 0; i < r.states.rows; ++i) expect += (1.0 / L) * r.states.row(i)[j];
      CHECK(u[j] == doctest::Approx(expect).epsilon(1e-5));
    }
  }
}

TEST_CASE("pool_all matches the serial reference for every strategy") {
  std::mt19937_64 gen(14);
  std::vector<HiddenStateRecord> records;
  for (int i = 0; i < 64; ++i) {
    auto r = random_record(gen, 8, 50);
    // Keep both spans non-empty so every strategy applies.
    if (r.states.rows < 2) r = record({{1, 2, 3, 4, 5, 6, 7, 8}, {8, 7, 6, 5, 4, 3, 2, 1}}, {0, 1}, {1, 2});
    if (r.prompt.empty()) r.prompt = {0, 1}, r.answer = {1, r.token_count()};
    if (r.answer.empty()) r.prompt = {0, r.token_count() - 1}, r.answer = {r.token_count() - 1, r.token_count()};
    records.push_back(std::move(r));
  }
  for (auto kind : {PoolingKind::kWeighted, PoolingKind::kUniform, PoolingKind::kEosOnly}) {
    for (auto span : {PoolingSpan::kFull, PoolingSpan::kPromptOnly, PoolingSpan::kLabelOnly}) {
      const FloatMatrix fast = pool_all(records, {kind, span});
      const FloatMatrix slow = reference::pool_all_serial(records, {kind, span});
      REQUIRE(fast.rows == slow.rows);
      for (std::size_t i = 0; i < fast.data.size(); ++i) {
        CHECK(fast.data[i] == doctest::Approx(slow.data[i]).epsilon(1e-5));
      }
    }
  }
}
