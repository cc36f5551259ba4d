#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace sift {

// Exact FLOP counts. Every formula is a sum of integer products, so the model
// is evaluated in 128-bit integers and only converted to double for display.
using Flops = unsigned __int128;

enum class CostMethod { kRandom, kPerplexity, kIfd, kLess, kEmbedding, kRds };

std::string_view to_string(CostMethod method);
// Throws ConfigError for unknown tags.
CostMethod parse_cost_method(std::string_view name);

struct CostModelParams {
  std::uint64_t model_params = 0;                    // N, the trained model
  std::optional<std::uint64_t> selector_params;      // defaults to N
  std::uint64_t pool_size = 0;                       // P; 0 drops pool inference
  std::uint64_t selected = 0;                        // D
  std::uint64_t tokens_per_sample = 2048;
  std::uint64_t epochs = 2;
  std::uint64_t ifd_warmup_pool = 200000;
  std::uint64_t ifd_warmup_train = 1000;
  std::uint64_t less_checkpoints = 3;

  std::uint64_t selector() const { return selector_params.value_or(model_params); }
};

// Throws ConfigError unless N, D, tokens, epochs and the method constants are
// positive and, for a non-empty pool, D <= P.
void validate(const CostModelParams& params);

// Cost with 6N FLOPs per training token and 2N per inference token:
//   training     epochs * T * 6 * N * D                      (all methods)
//   perplexity   + 2 * T * 2 * Ns * P
//   embedding    + 2 * T * 2 * Ns * P
//   rds          + 2 * T * 2 * Ns * P
//   ifd          + Wp * (T + 1) * 2 * Ns + Wt * T * 6 * Ns * D + 2 * T * 2 * Ns * P
//   less         + C * T * 6 * Ns * P
// where Ns is the selector size. Throws std::overflow_error past 2^128.
Flops estimate(CostMethod method, const CostModelParams& params);

std::string to_decimal(Flops value);
double to_double(Flops value);

}  // namespace sift
