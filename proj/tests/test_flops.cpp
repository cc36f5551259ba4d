#include <doctest.h>

#include <boost/multiprecision/cpp_int.hpp>
#include <random>

#include "sift/error.hpp"
#include "sift/flops.hpp"

using namespace sift;
using boost::multiprecision::cpp_int;

namespace {

cpp_int big(Flops f) {
  return cpp_int(static_cast<std::uint64_t>(f >> 64)) << 64 | cpp_int(static_cast<std::uint64_t>(f));
}

// Published cost expressions with literal constants, valid only at default
// tokens/epochs/warmup/checkpoint settings and N_sel = N.
cpp_int literal(CostMethod m, cpp_int N, cpp_int P, cpp_int D) {
  switch (m) {
    case CostMethod::kRandom: return 2 * 2048 * 6 * N * D;
    case CostMethod::kPerplexity: return 2 * 2048 * 2 * N * P + 2 * 2048 * 6 * N * D;
    case CostMethod::kIfd:
      return 200000 * 2049 * 2 * N + 1000 * 2048 * 6 * N * D + 2 * 2048 * 2 * N * P +
             2 * 2048 * 6 * N * D;
    case CostMethod::kLess: return 3 * 2048 * 6 * N * P + 2 * 2048 * 6 * N * D;
    case CostMethod::kEmbedding: return 2 * 2048 * 2 * N * P + 2 * 2048 * 6 * N * D;
    case CostMethod::kRds: return 2 * 2048 * 2 * N * P + 2 * 2048 * 6 * N * D;
  }
  return 0;
}

// Same model with every constant as a parameter.
cpp_int general(CostMethod m, const CostModelParams& p) {
  const cpp_int N = p.model_params, Ns = p.selector(), P = p.pool_size, D = p.selected;
  const cpp_int T = p.tokens_per_sample, E = p.epochs;
  const cpp_int train = E * T * 6 * N * D;
  switch (m) {
    case CostMethod::kRandom: return train;
    case CostMethod::kPerplexity:
    case CostMethod::kEmbedding:
    case CostMethod::kRds: return 2 * T * 2 * Ns * P + train;
    case CostMethod::kIfd:
      return cpp_int(p.ifd_warmup_pool) * (T + 1) * 2 * Ns +
             cpp_int(p.ifd_warmup_train) * T * 6 * Ns * D + 2 * T * 2 * Ns * P + train;
    case CostMethod::kLess: return cpp_int(p.less_checkpoints) * T * 6 * Ns * P + train;
  }
  return 0;
}

constexpr CostMethod kAll[] = {CostMethod::kRandom, CostMethod::kPerplexity, CostMethod::kIfd,
                               CostMethod::kLess,   CostMethod::kEmbedding,  CostMethod::kRds};

CostModelParams base() {
  CostModelParams p;
  p.model_params = 7'000'000'000;
  p.pool_size = 5'800'000;
  p.selected = 10'000;
  return p;
}

}  // namespace

TEST_CASE("flops: random at N=7e9, D=1e4") {
  CostModelParams p;
  p.model_params = 7'000'000'000;
  p.selected = 10'000;
  const Flops f = estimate(CostMethod::kRandom, p);
  CHECK(to_decimal(f) == "1720320000000000000");
  CHECK(to_double(f) == 1.72032e18);
}

TEST_CASE("flops: published expressions at five random settings") {
  std::mt19937_64 gen(50);
  std::uniform_int_distribution<std::uint64_t> n_dist(1'000'000, 80'000'000'000);
  std::uniform_int_distribution<std::uint64_t> p_dist(1, 10'000'000);
  for (int trial = 0; trial < 5; ++trial) {
    CostModelParams p;
    p.model_params = n_dist(gen);
    p.pool_size = p_dist(gen);
    p.selected = std::uniform_int_distribution<std::uint64_t>(1, p.pool_size)(gen);
    for (CostMethod m : kAll) {
      CHECK(big(estimate(m, p)) == literal(m, p.model_params, p.pool_size, p.selected));
    }
    // And with every constant varied, including a distinct selector model.
    p.selector_params = n_dist(gen);
    p.tokens_per_sample = std::uniform_int_distribution<std::uint64_t>(1, 8192)(gen);
    p.epochs = std::uniform_int_distribution<std::uint64_t>(1, 5)(gen);
    p.ifd_warmup_pool = std::uniform_int_distribution<std::uint64_t>(1, 500000)(gen);
    p.ifd_warmup_train = std::uniform_int_distribution<std::uint64_t>(1, 5000)(gen);
    p.less_checkpoints = std::uniform_int_distribution<std::uint64_t>(1, 6)(gen);
    for (CostMethod m : kAll) CHECK(big(estimate(m, p)) == general(m, p));
  }
}

TEST_CASE("flops: empty pool and identical formulas") {
  CostModelParams p = base();
  const Flops random = estimate(CostMethod::kRandom, p);
  CHECK(estimate(CostMethod::kEmbedding, p) == estimate(CostMethod::kRds, p));
  CHECK(estimate(CostMethod::kPerplexity, p) == estimate(CostMethod::kRds, p));
  p.pool_size = 0;
  CHECK(estimate(CostMethod::kPerplexity, p) == random);
  CHECK(estimate(CostMethod::kLess, p) == random);
}

TEST_CASE("flops: linear in D, affine in P, less above rds") {
  CostModelParams p = base();
  const auto at = [&](CostMethod m, std::uint64_t P, std::uint64_t D) {
    CostModelParams q = p;
    q.pool_size = P;
    q.selected = D;
    return big(estimate(m, q));
  };
  CHECK(at(CostMethod::kRandom, 100000, 2000) == 2 * at(CostMethod::kRandom, 100000, 1000));
  for (CostMethod m : {CostMethod::kPerplexity, CostMethod::kEmbedding, CostMethod::kRds, CostMethod::kLess}) {
    const cpp_int f1 = at(m, 100000, 50), f2 = at(m, 200000, 50), f3 = at(m, 300000, 50);
    CHECK(f2 - f1 == f3 - f2);
    CHECK(f2 > f1);
  }
  for (std::uint64_t P : {1ull, 10ull, 100000ull, 10'000'000ull}) {
    CHECK(at(CostMethod::kLess, P, 1) > at(CostMethod::kRds, P, 1));
  }
}

TEST_CASE("flops: doubling tokens per sample") {
  CostModelParams p = base();
  CostModelParams q = p;
  q.tokens_per_sample *= 2;
  for (CostMethod m : kAll) {
    if (m == CostMethod::kIfd) continue;
    CHECK(big(estimate(m, q)) == 2 * big(estimate(m, p)));
  }
  // The warmup inference term scales with T + 1, so IFD grows by exactly that term less.
  const cpp_int warm = cpp_int(p.ifd_warmup_pool) * 2 * p.model_params;
  CHECK(big(estimate(CostMethod::kIfd, q)) == 2 * big(estimate(CostMethod::kIfd, p)) - warm);
}

TEST_CASE("flops: strictly positive and monotone in each parameter") {
  std::mt19937_64 gen(51);
  for (int trial = 0; trial < 200; ++trial) {
    CostModelParams p;
    p.model_params = std::uniform_int_distribution<std::uint64_t>(1, 1'000'000'000)(gen);
    p.pool_size = std::uniform_int_distribution<std::uint64_t>(1, 1'000'000)(gen);
    p.selected = std::uniform_int_distribution<std::uint64_t>(1, p.pool_size)(gen);
    for (CostMethod m : kAll) {
      const cpp_int f = big(estimate(m, p));
      CHECK(f > 0);
      auto bumped = [&](auto field) {
        CostModelParams q = p;
        q.*field += 1;
        if (q.selected > q.pool_size) q.pool_size = q.selected;
        return big(estimate(m, q));
      };
      CHECK(bumped(&CostModelParams::model_params) > f);
      CHECK(bumped(&CostModelParams::selected) > f);
      CHECK(bumped(&CostModelParams::tokens_per_sample) > f);
      CHECK(bumped(&CostModelParams::epochs) > f);
      CHECK(bumped(&CostModelParams::pool_size) >= f);
    }
  }
}

TEST_CASE("flops: validation and overflow") {
  CostModelParams p = base();
  p.selected = p.pool_size + 1;
  CHECK_THROWS_AS(estimate(CostMethod::kRandom, p), ConfigError);
  p = base();
  p.model_params = 0;
  CHECK_THROWS_AS(estimate(CostMethod::kRandom, p), ConfigError);
  p = base();
  p.epochs = 0;
  CHECK_THROWS_AS(validate(p), ConfigError);
  p = base();
  p.model_params = ~0ull;
  p.pool_size = ~0ull;
  p.selected = ~0ull;
  CHECK_THROWS_AS(estimate(CostMethod::kLess, p), std::overflow_error);
  CHECK_THROWS_AS(parse_cost_method("gpt"), ConfigError);
  for (CostMethod m : kAll) CHECK(parse_cost_method(to_string(m)) == m);
}
