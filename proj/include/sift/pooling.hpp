#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sift/corpus.hpp"
#include "sift/feature_store.hpp"
#include "sift/matrix.hpp"

namespace sift {

enum class PoolingKind { kWeighted, kUniform, kEosOnly };
enum class PoolingSpan { kFull, kPromptOnly, kLabelOnly };

struct PoolingStrategy {
  PoolingKind kind = PoolingKind::kWeighted;
  PoolingSpan span = PoolingSpan::kFull;

  bool operator==(const PoolingStrategy&) const = default;
};

std::string_view to_string(PoolingKind kind);
std::string_view to_string(PoolingSpan span);
// Throws ConfigError on unknown names.
PoolingKind parse_pooling_kind(std::string_view name);
PoolingSpan parse_pooling_span(std::string_view name);

// w_i = i / (L(L+1)/2) for i = 1..L. Throws std::domain_error for L = 0.
std::vector<double> position_weights(std::size_t length);

// The same weights as exact fractions: numerators[i-1] = i, shared denominator.
struct WeightFractions {
  std::vector<std::uint64_t> numerators;
  std::uint64_t denominator = 0;
};
WeightFractions position_weight_fractions(std::size_t length);

// Token range the strategy pools over. eos_only uses the last token of it.
TokenSpan select_span(const HiddenStateRecord& record, PoolingSpan span);

// Pools one sample. Positions are re-indexed from 1 inside the selected span.
// Throws DataError naming `sample` when the span is empty.
std::vector<float> pool(const HiddenStateRecord& record, PoolingStrategy strategy,
                        PoolIndex sample = 0);

// Pools every record in parallel; row i of the result belongs to records[i],
// whose pool index is first_index + i.
FloatMatrix pool_all(std::span<const HiddenStateRecord> records, PoolingStrategy strategy,
                     PoolIndex first_index = 0);

namespace reference {

// Serial pooling that applies the explicit weight vector row by row.
std::vector<float> pool_serial(const HiddenStateRecord& record, PoolingStrategy strategy,
                               PoolIndex sample = 0);
FloatMatrix pool_all_serial(std::span<const HiddenStateRecord> records, PoolingStrategy strategy,
                            PoolIndex first_index = 0);

}  // namespace reference

}  // namespace sift
