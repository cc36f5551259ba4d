#include "sift/flops.hpp"

#include <algorithm>
#include <initializer_list>
#include <stdexcept>

#include "sift/error.hpp"

namespace sift {

std::string_view to_string(CostMethod method) {
  switch (method) {
    case CostMethod::kRandom: return "random";
    case CostMethod::kPerplexity: return "perplexity";
    case CostMethod::kIfd: return "ifd";
    case CostMethod::kLess: return "less";
    case CostMethod::kEmbedding: return "embedding";
    case CostMethod::kRds: return "rds";
  }
  return "random";
}

CostMethod parse_cost_method(std::string_view name) {
  for (auto m : {CostMethod::kRandom, CostMethod::kPerplexity, CostMethod::kIfd,
                 CostMethod::kLess, CostMethod::kEmbedding, CostMethod::kRds}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown cost method \"" + std::string(name) + "\"");
}

void validate(const CostModelParams& p) {
  auto positive = [](std::uint64_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("cost model: ") + name + " must be positive");
  };
  positive(p.model_params, "model_params");
  if (p.selector_params) positive(*p.selector_params, "selector_params");
  positive(p.selected, "selected");
  positive(p.tokens_per_sample, "tokens_per_sample");
  positive(p.epochs, "epochs");
  positive(p.ifd_warmup_pool, "ifd_warmup_pool");
  positive(p.ifd_warmup_train, "ifd_warmup_train");
  positive(p.less_checkpoints, "less_checkpoints");
  if (p.pool_size > 0 && p.selected > p.pool_size) {
    throw ConfigError("cost model: selected size exceeds pool size");
  }
}

namespace {

Flops product(std::initializer_list<std::uint64_t> factors) {
  Flops acc = 1;
  for (std::uint64_t f : factors) {
    if (__builtin_mul_overflow(acc, static_cast<Flops>(f), &acc)) {
      throw std::overflow_error("FLOPs estimate exceeds 128 bits");
    }
  }
  return acc;
}

Flops sum(std::initializer_list<Flops> terms) {
  Flops acc = 0;
  for (Flops t : terms) {
    if (__builtin_add_overflow(acc, t, &acc)) {
      throw std::overflow_error("FLOPs estimate exceeds 128 bits");
    }
  }
  return acc;
}

constexpr std::uint64_t kTrainFlopsPerParam = 6;
constexpr std::uint64_t kInferFlopsPerParam = 2;
// Passes of selector inference over the pool.
constexpr std::uint64_t kPoolInferencePasses = 2;

}  // namespace

Flops estimate(CostMethod method, const CostModelParams& p) {
  validate(p);
  const std::uint64_t T = p.tokens_per_sample;
  const std::uint64_t N = p.model_params;
  const std::uint64_t Ns = p.selector();
  const std::uint64_t P = p.pool_size;
  const std::uint64_t D = p.selected;

  const Flops train = product({p.epochs, T, kTrainFlopsPerParam, N, D});
  const Flops pool_inference = product({kPoolInferencePasses, T, kInferFlopsPerParam, Ns, P});

  switch (method) {
    case CostMethod::kRandom:
      return train;
    case CostMethod::kPerplexity:
    case CostMethod::kEmbedding:
    case CostMethod::kRds:
      return sum({pool_inference, train});
    case CostMethod::kIfd:
      return sum({product({p.ifd_warmup_pool, T + 1, kInferFlopsPerParam, Ns}),
                  product({p.ifd_warmup_train, T, kTrainFlopsPerParam, Ns, D}), pool_inference,
                  train});
    case CostMethod::kLess:
      return sum({product({p.less_checkpoints, T, kTrainFlopsPerParam, Ns, P}), train});
  }
  throw ConfigError("unknown cost method");
}

std::string to_decimal(Flops value) {
  if (value == 0) return "0";
  std::string out;
  while (value > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(value % 10)));
    value /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

double to_double(Flops value) { return static_cast<double>(value); }

}  // namespace sift
