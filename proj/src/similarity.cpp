#include "sift/similarity.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <limits>

#include <omp.h>

#include <json.hpp>

#include "sift/error.hpp"
#include "sift/io.hpp"

namespace sift {

bool normalize_row(std::span<float> row) {
  const float sumsq = dot_f32(row.data(), row.data(), row.size());
  if (!(sumsq > 0.0f) || !std::isfinite(sumsq)) return false;
  const float inv = 1.0f / std::sqrt(sumsq);
  for (float& x : row) x *= inv;
  return true;
}

void normalize(FloatMatrix& vectors, PoolIndex first_index) {
  for (std::size_t i = 0; i < vectors.rows; ++i) {
    if (!normalize_row(vectors.row(i))) {
      throw DataError("zero or non-finite vector at pool index " +
                      std::to_string(first_index + i) + ": cosine similarity is undefined");
    }
  }
}

namespace {

// Bounded max-heap whose top is the worst entry kept so far.
class TopKAccumulator {
 public:
  explicit TopKAccumulator(std::size_t k) : k_(k) { heap_.reserve(std::min<std::size_t>(k, 4096)); }

  void offer(TopKEntry e) {
    if (heap_.size() < k_) {
      heap_.push_back(e);
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    } else if (ranks_before(e, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), ranks_before);
      heap_.back() = e;
      std::push_heap(heap_.begin(), heap_.end(), ranks_before);
    }
  }

  bool full() const { return heap_.size() == k_; }
  const TopKEntry& worst() const { return heap_.front(); }
  std::vector<TopKEntry>& entries() { return heap_; }

 private:
  std::size_t k_;
  std::vector<TopKEntry> heap_;
};

FloatMatrix normalized_queries(const FloatMatrix& queries) {
  FloatMatrix q = queries;
  for (std::size_t i = 0; i < q.rows; ++i) {
    if (!normalize_row(q.row(i))) {
      throw DataError("zero or non-finite query vector at row " + std::to_string(i));
    }
  }
  return q;
}

// Per-thread state for one scan: an accumulator per query plus a scratch
// block of normalized pool rows.
struct ThreadState {
  std::vector<TopKAccumulator> accs;
  std::vector<float> block;
};

class TopKScan {
 public:
  TopKScan(const FloatMatrix& queries, std::size_t k, const TopKOptions& options)
      : queries_(normalized_queries(queries)), k_(k), options_(options) {
    if (k == 0) throw ConfigError("k must be at least 1");
    threads_ = options.threads > 0 ? options.threads : omp_get_max_threads();
    states_.resize(static_cast<std::size_t>(threads_));
    for (auto& s : states_) {
      s.accs.assign(queries_.rows, TopKAccumulator(k));
      s.block.resize(options.block_rows * queries_.cols);
    }
  }

  // Scans `count` contiguous rows whose first row has pool index `start`.
  void scan(const float* rows, std::size_t count, PoolIndex start) {
    const std::size_t dim = queries_.cols;
    const std::size_t block_rows = options_.block_rows;
    const auto nblocks = static_cast<std::int64_t>((count + block_rows - 1) / block_rows);
    PoolIndex bad = std::numeric_limits<PoolIndex>::max();

#pragma omp parallel num_threads(threads_)
    {
      ThreadState& st = states_[static_cast<std::size_t>(omp_get_thread_num())];
#pragma omp for schedule(static)
      for (std::int64_t b = 0; b < nblocks; ++b) {
        const std::size_t begin = static_cast<std::size_t>(b) * block_rows;
        const std::size_t n = std::min(block_rows, count - begin);
        std::memcpy(st.block.data(), rows + begin * dim, n * dim * sizeof(float));
        for (std::size_t r = 0; r < n; ++r) {
          if (!normalize_row({st.block.data() + r * dim, dim})) {
#pragma omp critical(sift_topk_bad_row)
            bad = std::min<PoolIndex>(bad, start + begin + r);
            std::fill_n(st.block.data() + r * dim, dim, 0.0f);
          }
        }
        for (std::size_t q = 0; q < queries_.rows; ++q) {
          const float* qv = queries_.row(q).data();
          TopKAccumulator& acc = st.accs[q];
          for (std::size_t r = 0; r < n; ++r) {
            const TopKEntry e{start + begin + r, dot_f32(qv, st.block.data() + r * dim, dim)};
            if (!acc.full() || ranks_before(e, acc.worst())) acc.offer(e);
          }
        }
      }
    }
    if (bad != std::numeric_limits<PoolIndex>::max()) {
      throw DataError("zero or non-finite vector at pool index " + std::to_string(bad) +
                      ": cosine similarity is undefined");
    }
    scanned_ += count;
  }

  // Merging is order-independent because ranks_before is a strict total order.
  std::vector<TopKList> finish() {
    if (scanned_ == 0) throw DataError("cannot search an empty pool");
    std::vector<TopKList> out(queries_.rows);
    for (std::size_t q = 0; q < queries_.rows; ++q) {
      std::vector<TopKEntry> merged;
      for (auto& st : states_) {
        auto& e = st.accs[q].entries();
        merged.insert(merged.end(), e.begin(), e.end());
      }
      const std::size_t keep = std::min(k_, merged.size());
      std::partial_sort(merged.begin(), merged.begin() + static_cast<std::ptrdiff_t>(keep),
                        merged.end(), ranks_before);
      merged.resize(keep);
      out[q] = TopKList{q, k_, scanned_, std::move(merged)};
    }
    return out;
  }

  std::size_t dim() const { return queries_.cols; }

 private:
  FloatMatrix queries_;
  std::size_t k_;
  TopKOptions options_;
  int threads_ = 1;
  std::vector<ThreadState> states_;
  std::size_t scanned_ = 0;
};

void require_dims(std::size_t query_dim, std::size_t pool_dim) {
  if (query_dim != pool_dim) {
    throw DataError("query dim " + std::to_string(query_dim) + " does not match pool dim " +
                    std::to_string(pool_dim));
  }
}

}  // namespace

std::vector<TopKList> cosine_topk(const FloatMatrix& queries, const EmbeddingStore& pool,
                                  std::size_t k, const TopKOptions& options) {
  require_dims(queries.cols, pool.dim());
  TopKScan scan(queries, k, options);
  for (std::size_t s = 0; s < pool.shard_count(); ++s) {
    const MappedEmbeddingShard shard = pool.map_shard(s);
    scan.scan(shard.data(), shard.count(), shard.start());
  }
  return scan.finish();
}

std::vector<TopKList> cosine_topk(const FloatMatrix& queries, const FloatMatrix& pool,
                                  std::size_t k, const TopKOptions& options) {
  require_dims(queries.cols, pool.cols);
  TopKScan scan(queries, k, options);
  if (pool.rows > 0) scan.scan(pool.data.data(), pool.rows, 0);
  return scan.finish();
}

FloatMatrix dense_scores(const FloatMatrix& queries, const FloatMatrix& pool,
                         std::size_t max_cells) {
  require_dims(queries.cols, pool.cols);
  if (pool.rows == 0) throw DataError("cannot score against an empty pool");
  if (queries.rows * pool.rows > max_cells) {
    throw DataError("dense score matrix of " + std::to_string(queries.rows) + " x " +
                    std::to_string(pool.rows) + " exceeds the limit of " +
                    std::to_string(max_cells) + " cells");
  }
  const FloatMatrix q = normalized_queries(queries);
  FloatMatrix p = pool;
  normalize(p);
  FloatMatrix out(q.rows, p.rows);
  for (std::size_t i = 0; i < q.rows; ++i) {
    for (std::size_t j = 0; j < p.rows; ++j) {
      out.data[i * p.rows + j] = dot_f32(q.row(i).data(), p.row(j).data(), q.cols);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_topk(const std::vector<TopKList>& lists, const std::filesystem::path& path) {
  AtomicFile out(path);
  const std::size_t k = lists.empty() ? 0 : lists.front().k;
  std::array<std::byte, kShardHeaderSize> header{};
  encode_header({RecordType::kTopK, 0, lists.size(), static_cast<std::uint32_t>(k)}, header);
  out.write(header);
  for (const auto& l : lists) {
    out.write_pod<std::uint64_t>(l.query_id);
    out.write_pod<std::uint64_t>(l.pool_size);
    out.write_pod<std::uint64_t>(l.entries.size());
    for (const auto& e : l.entries) {
      out.write_pod<std::uint64_t>(e.index);
      out.write_pod<float>(e.score);
    }
  }
  out.commit();
}

std::vector<TopKList> read_topk(const std::filesystem::path& path) {
  const MappedFile file(path);
  const auto bytes = file.bytes();
  const ShardHeader h = decode_header(bytes, path.string());
  if (h.type != RecordType::kTopK) {
    throw DataError(path.string() + ": not a topk file");
  }
  std::size_t pos = kShardHeaderSize;
  auto take = [&](auto& v) {
    if (bytes.size() - pos < sizeof(v)) {
      throw DataError(path.string() + ": truncated payload at byte " + std::to_string(pos));
    }
    std::memcpy(&v, bytes.data() + pos, sizeof(v));
    pos += sizeof(v);
  };
  std::vector<TopKList> lists(h.count);
  for (auto& l : lists) {
    std::uint64_t qid = 0, pool_size = 0, len = 0;
    take(qid);
    take(pool_size);
    take(len);
    l.query_id = qid;
    l.pool_size = pool_size;
    l.k = h.dim;
    if (len > h.dim) throw DataError(path.string() + ": list longer than k");
    l.entries.resize(len);
    for (auto& e : l.entries) {
      take(e.index);
      take(e.score);
    }
  }
  if (pos != bytes.size()) throw DataError(path.string() + ": trailing bytes after payload");
  return lists;
}

void write_topk_jsonl(const std::vector<TopKList>& lists, const std::filesystem::path& path) {
  AtomicFile out(path);
  for (const auto& l : lists) {
    nlohmann::ordered_json j;
    j["query_id"] = l.query_id;
    j["k"] = l.k;
    j["pool_size"] = l.pool_size;
    auto& entries = j["entries"] = nlohmann::ordered_json::array();
    for (const auto& e : l.entries) entries.push_back({e.index, e.score});
    out.write(j.dump());
    out.write("\n");
  }
  out.commit();
}

}  // namespace sift
