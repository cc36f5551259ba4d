#include <algorithm>
#include <numeric>

#include "sift/similarity.hpp"

namespace sift::reference {

std::vector<TopKList> cosine_topk_serial(const FloatMatrix& queries, const FloatMatrix& pool,
                                         std::size_t k) {
  const FloatMatrix scores = dense_scores(queries, pool, queries.rows * pool.rows);
  std::vector<TopKList> out;
  for (std::size_t q = 0; q < queries.rows; ++q) {
    std::vector<TopKEntry> row(pool.rows);
    for (std::size_t j = 0; j < pool.rows; ++j) row[j] = {j, scores.data[q * pool.rows + j]};
    std::sort(row.begin(), row.end(), ranks_before);
    row.resize(std::min(k, row.size()));
    out.push_back({q, k, pool.rows, std::move(row)});
  }
  return out;
}

}  // namespace sift::reference
