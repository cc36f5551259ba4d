#include "sift/error.hpp"
#include "sift/pooling.hpp"

namespace sift::reference {

std::vector<float> pool_serial(const HiddenStateRecord& record, PoolingStrategy strategy,
                               PoolIndex sample) {
  const TokenSpan span = select_span(record, strategy.span);
  if (span.empty()) {
    throw DataError("sample " + std::to_string(sample) + ": " +
                    std::string(to_string(strategy.span)) + " span is empty");
  }
  const std::size_t dim = record.states.cols;
  const std::size_t len = span.size();

  std::vector<double> weights;
  switch (strategy.kind) {
    case PoolingKind::kWeighted: weights = position_weights(len); break;
    case PoolingKind::kUniform: weights.assign(len, 1.0 / static_cast<double>(len)); break;
    case PoolingKind::kEosOnly:
      weights.assign(len, 0.0);
      weights.back() = 1.0;
      break;
  }

  std::vector<double> acc(dim, 0.0);
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t j = 0; j < dim; ++j) {
      acc[j] += weights[t] * record.states.data[(span.begin + t) * dim + j];
    }
  }
  std::vector<float> out(dim);
  for (std::size_t j = 0; j < dim; ++j) out[j] = static_cast<float>(acc[j]);
  return out;
}

FloatMatrix pool_all_serial(std::span<const HiddenStateRecord> records, PoolingStrategy strategy,
                            PoolIndex first_index) {
  const std::size_t dim = records.empty() ? 0 : records.front().states.cols;
  FloatMatrix out(records.size(), dim);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto v = pool_serial(records[i], strategy, first_index + i);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace sift::reference
