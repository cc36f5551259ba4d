// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>

#include "sift/pooling.hpp"
#include "sift/similarity.hpp"

namespace {

sift::FloatMatrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<float> d;
  sift::FloatMatrix m(rows, cols);
  for (float& x : m.data) x = d(gen);
  return m;
}

std::vector<sift::HiddenStateRecord> hidden_states(std::size_t count, std::size_t dim) {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::uint32_t> len(16, 512);
  std::vector<sift::HiddenStateRecord> out(count);
  for (auto& r : out) {
    const std::uint32_t L = len(gen);
    r.states = gaussian(L, dim, gen());
    r.prompt = {0, L / 3};
    r.answer = {L / 3, L};
  }
  return out;
}

void BM_TopKParallel(benchmark::State& state) {
  const auto q = gaussian(16, 128, 1);
  const auto p = gaussian(static_cast<std::size_t>(state.range(0)), 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sift::cosine_topk(q, p, 100));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 16);
}

void BM_TopKSerial(benchmark::State& state) {
  const auto q = gaussian(16, 128, 1);
  const auto p = gaussian(static_cast<std::size_t>(state.range(0)), 128, 2);
  for (auto _ : state) benchmark::DoNotOptimize(sift::reference::cosine_topk_serial(q, p, 100));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 16);
}

void BM_PoolParallel(benchmark::State& state) {
  const auto records = hidden_states(static_cast<std::size_t>(state.range(0)), 256);
  for (auto _ : state) benchmark::DoNotOptimize(sift::pool_all(records, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_PoolSerial(benchmark::State& state) {
  const auto records = hidden_states(static_cast<std::size_t>(state.range(0)), 256);
  for (auto _ : state) benchmark::DoNotOptimize(sift::reference::pool_all_serial(records, {}));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_TopKParallel)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TopKSerial)->Arg(10'000)->Arg(100'000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PoolParallel)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PoolSerial)->Arg(256)->Arg(2048)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
