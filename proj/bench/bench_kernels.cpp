// Serial vs OpenMP variants of the data-parallel kernels. Both variants
// produce bit-identical results; this measures only their speed.
//
//   OMP_NUM_THREADS=4 ./bench_kernels --benchmark_filter=gemm

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "crowdhg/grouping.hpp"
#include "crowdhg/kernels.hpp"

namespace {

using namespace crowdhg;

std::vector<double> random_values(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

Tensor random_features(std::size_t rows, std::size_t cols, unsigned seed) {
  Tensor t({rows, cols});
  const auto v = random_values(rows * cols, seed);
  std::copy(v.begin(), v.end(), t.values().begin());
  return t;
}

void gemm(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    std::fill(out.begin(), out.end(), 0.0);
    kernels::gemm_accumulate(exec, {a, n, n}, {b, n, n}, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

void affinity(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor x = random_features(n, 35, 3);
  for (auto _ : state) benchmark::DoNotOptimize(grouping::cosine_affinity(x, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
}

void greedy(benchmark::State& state, kernels::Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a = grouping::cosine_affinity(random_features(n, 35, 4));
  for (auto _ : state) benchmark::DoNotOptimize(grouping::infer_groups_greedy(a, 5, exec));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void BM_gemm_serial(benchmark::State& s) { gemm(s, kernels::Exec::serial); }
void BM_gemm_parallel(benchmark::State& s) { gemm(s, kernels::Exec::parallel); }
void BM_affinity_serial(benchmark::State& s) { affinity(s, kernels::Exec::serial); }
void BM_affinity_parallel(benchmark::State& s) { affinity(s, kernels::Exec::parallel); }
void BM_greedy_serial(benchmark::State& s) { greedy(s, kernels::Exec::serial); }
void BM_greedy_parallel(benchmark::State& s) { greedy(s, kernels::Exec::parallel); }

}  // namespace

BENCHMARK(BM_gemm_serial)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_gemm_parallel)->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_affinity_serial)->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_affinity_parallel)->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_greedy_serial)->RangeMultiplier(4)->Range(16, 1024);
BENCHMARK(BM_greedy_parallel)->RangeMultiplier(4)->Range(16, 1024);

BENCHMARK_MAIN();
