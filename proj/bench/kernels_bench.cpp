// Serial reference kernels vs the OpenMP versions.
//   ./kernels_bench --benchmark_filter=gemm
// Set OMP_NUM_THREADS to control the parallel side.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "inalu/kernels.hpp"

namespace k = inalu::kernels;

namespace {

std::vector<double> filled(std::size_t n) {
  std::mt19937_64 rng(n);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

// rows = batch, inner = input width, cols = output width
template <auto Kernel>
void gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto kk = static_cast<std::size_t>(state.range(1));
  const auto n = static_cast<std::size_t>(state.range(2));
  // sized for both gemm (B k x n, C m x n) and gemm_tn (B m x n, C k x n)
  const auto a = filled(m * kk), b = filled(std::max(m, kk) * n);
  std::vector<double> c(std::max(m, kk) * n);
  for (auto _ : state) {
    Kernel(a, b, c, m, kk, n);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(m * kk * n));
}

template <auto Kernel>
void row_product(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  const auto a = filled(m * n);
  std::vector<double> out(m);
  for (auto _ : state) {
    Kernel(a, out, m, n);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(m * n));
}

void gemm_shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 100, 2})->Args({4096, 100, 2})->Args({64000, 100, 2})->Args({512, 512, 512});
}

}  // namespace

BENCHMARK(gemm<k::serial::gemm>)->Name("gemm/serial")->Apply(gemm_shapes);
BENCHMARK(gemm<k::parallel::gemm>)->Name("gemm/parallel")->Apply(gemm_shapes)->UseRealTime();
BENCHMARK(gemm<k::serial::gemm_tn>)->Name("gemm_tn/serial")->Apply(gemm_shapes);
BENCHMARK(gemm<k::parallel::gemm_tn>)->Name("gemm_tn/parallel")->Apply(gemm_shapes)->UseRealTime();
BENCHMARK(row_product<k::serial::row_product>)->Name("row_product/serial")->Args({64000, 100});
BENCHMARK(row_product<k::parallel::row_product>)->Name("row_product/parallel")->Args({64000, 100})->UseRealTime();

BENCHMARK_MAIN();
