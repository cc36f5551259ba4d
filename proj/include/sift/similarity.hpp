#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "sift/corpus.hpp"
#include "sift/feature_store.hpp"
#include "sift/matrix.hpp"

namespace sift {

struct TopKEntry {
  PoolIndex index = 0;
  float score = 0.0f;

  bool operator==(const TopKEntry&) const = default;
};

// Total order used everywhere: higher score first, then lower pool index.
inline bool ranks_before(const TopKEntry& a, const TopKEntry& b) {
  return a.score > b.score || (a.score == b.score && a.index < b.index);
}

struct TopKList {
  std::size_t query_id = 0;
  std::size_t k = 0;
  std::size_t pool_size = 0;
  std::vector<TopKEntry> entries;  // length min(k, pool_size), best first

  // True when the list covers the whole pool, so it can never run dry early.
  bool complete() const { return entries.size() == pool_size; }
  bool operator==(const TopKList&) const = default;
};

// Fixed-order float32 dot product: eight interleaved partial sums combined
// pairwise. Both the parallel kernel and the serial reference call this, so a
// given (query, row) pair always produces the same bits.
inline float dot_f32(const float* a, const float* b, std::size_t dim) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t j = 0;
  for (; j + 8 <= dim; j += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[j + l] * b[j + l];
  }
  for (int l = 0; j < dim; ++j, ++l) acc[l] += a[j] * b[j];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

// Scales `row` to unit norm. Returns false for a zero or non-finite row.
bool normalize_row(std::span<float> row);

// Normalizes every row in place; throws DataError naming the pool index
// (first_index + row) of the first zero vector.
void normalize(FloatMatrix& vectors, PoolIndex first_index = 0);

struct TopKOptions {
  std::size_t block_rows = 512;
  // 0 keeps the OpenMP default.
  int threads = 0;
};

// Exact cosine top-k of every query against the pool. Results do not depend
// on shard layout, block size, or thread count.
std::vector<TopKList> cosine_topk(const FloatMatrix& queries, const EmbeddingStore& pool,
                                  std::size_t k, const TopKOptions& options = {});
std::vector<TopKList> cosine_topk(const FloatMatrix& queries, const FloatMatrix& pool,
                                  std::size_t k, const TopKOptions& options = {});

inline constexpr std::size_t kDenseCellLimit = std::size_t{1} << 26;

// Full Q x |pool| cosine matrix. Throws DataError above max_cells.
FloatMatrix dense_scores(const FloatMatrix& queries, const FloatMatrix& pool,
                         std::size_t max_cells = kDenseCellLimit);

// Binary layout after the shared header (type topk, count = lists, dim = k):
//   per list: u64 query_id, u64 pool_size, u64 length, length x (u64 index, f32 score)
void write_topk(const std::vector<TopKList>& lists, const std::filesystem::path& path);
std::vector<TopKList> read_topk(const std::filesystem::path& path);
// One JSON object per list, for debugging.
void write_topk_jsonl(const std::vector<TopKList>& lists, const std::filesystem::path& path);

namespace reference {

// Materializes the dense score matrix and fully sorts each row.
std::vector<TopKList> cosine_topk_serial(const FloatMatrix& queries, const FloatMatrix& pool,
                                         std::size_t k);

}  // namespace reference

}  // namespace sift
