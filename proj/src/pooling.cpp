#include "sift/pooling.hpp"

#include <stdexcept>

#include "sift/error.hpp"

namespace sift {

std::string_view to_string(PoolingKind kind) {
  switch (kind) {
    case PoolingKind::kWeighted: return "weighted";
    case PoolingKind::kUniform: return "uniform";
    case PoolingKind::kEosOnly: return "eos_only";
  }
  return "weighted";
}

std::string_view to_string(PoolingSpan span) {
  switch (span) {
    case PoolingSpan::kFull: return "full";
    case PoolingSpan::kPromptOnly: return "prompt_only";
    case PoolingSpan::kLabelOnly: return "label_only";
  }
  return "full";
}

PoolingKind parse_pooling_kind(std::string_view name) {
  if (name == "weighted") return PoolingKind::kWeighted;
  if (name == "uniform") return PoolingKind::kUniform;
  if (name == "eos_only") return PoolingKind::kEosOnly;
  throw ConfigError("unknown pooling kind \"" + std::string(name) + "\"");
}

PoolingSpan parse_pooling_span(std::string_view name) {
  if (name == "full") return PoolingSpan::kFull;
  if (name == "prompt_only") return PoolingSpan::kPromptOnly;
  if (name == "label_only") return PoolingSpan::kLabelOnly;
  throw ConfigError("unknown pooling span \"" + std::string(name) + "\"");
}

std::vector<double> position_weights(std::size_t length) {
  if (length == 0) throw std::domain_error("position weights need at least one token");
  const double denom = static_cast<double>(length) * static_cast<double>(length + 1) / 2.0;
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i) w[i] = static_cast<double>(i + 1) / denom;
  return w;
}

WeightFractions position_weight_fractions(std::size_t length) {
  if (length == 0) throw std::domain_error("position weights need at least one token");
  WeightFractions f;
  f.numerators.resize(length);
  for (std::size_t i = 0; i < length; ++i) f.numerators[i] = i + 1;
  f.denominator = static_cast<std::uint64_t>(length) * (length + 1) / 2;
  return f;
}

TokenSpan select_span(const HiddenStateRecord& record, PoolingSpan span) {
  switch (span) {
    case PoolingSpan::kFull: return {0, record.token_count()};
    case PoolingSpan::kPromptOnly: return record.prompt;
    case PoolingSpan::kLabelOnly: return record.answer;
  }
  return {0, record.token_count()};
}

namespace {

void require_span(TokenSpan span, const HiddenStateRecord& record, PoolingSpan which,
                  PoolIndex sample) {
  if (span.empty() || span.end > record.token_count()) {
    throw DataError("sample " + std::to_string(sample) + ": " + std::string(to_string(which)) +
                    " span is empty");
  }
}

}  // namespace

// Weighted pooling accumulates sum_i i * h_i in double and divides once by
// the triangular number, which keeps a constant input exactly constant.
std::vector<float> pool(const HiddenStateRecord& record, PoolingStrategy strategy,
                        PoolIndex sample) {
  const TokenSpan span = select_span(record, strategy.span);
  require_span(span, record, strategy.span, sample);
  const std::size_t dim = record.states.cols;
  std::vector<float> out(dim);

  if (strategy.kind == PoolingKind::kEosOnly) {
    const auto last = record.states.row(span.end - 1);
    std::copy(last.begin(), last.end(), out.begin());
    return out;
  }

  std::vector<double> acc(dim, 0.0);
  const std::size_t len = span.size();
  for (std::size_t t = 0; t < len; ++t) {
    const auto h = record.states.row(span.begin + t);
    const double coeff = strategy.kind == PoolingKind::kWeighted ? static_cast<double>(t + 1) : 1.0;
    for (std::size_t j = 0; j < dim; ++j) acc[j] += coeff * static_cast<double>(h[j]);
  }
  const double denom = strategy.kind == PoolingKind::kWeighted
                           ? static_cast<double>(len) * static_cast<double>(len + 1) / 2.0
                           : static_cast<double>(len);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(acc[j] / denom);
  return out;
}

FloatMatrix pool_all(std::span<const HiddenStateRecord> records, PoolingStrategy strategy,
                     PoolIndex first_index) {
  const std::size_t dim = records.empty() ? 0 : records.front().states.cols;
  FloatMatrix out(records.size(), dim);
  const auto count = static_cast<std::int64_t>(records.size());
  std::int64_t first_bad = count;
  std::string bad_message;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::int64_t i = 0; i < count; ++i) {
    try {
      if (records[i].states.cols != dim) {
        throw DataError("sample " + std::to_string(first_index + i) + ": hidden dim " +
                        std::to_string(records[i].states.cols) + " differs from " +
                        std::to_string(dim));
      }
      const auto v = pool(records[i], strategy, first_index + i);
      std::copy(v.begin(), v.end(), out.row(i).begin());
    } catch (const std::exception& e) {
#pragma omp critical(sift_pool_error)
      if (i < first_bad) {
        first_bad = i;
        bad_message = e.what();
      }
    }
  }
  if (first_bad < count) throw DataError(bad_message);
  return out;
}

}  // namespace sift
