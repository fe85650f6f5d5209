// SPDX-License-Identifier: Apache-2.0
// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "emoda/kernels.hpp"

using namespace emoda::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) gemm(Trans::kNo, Trans::kNo, n, n, n, a, b, c, false);
    else reference::gemm(Trans::kNo, Trans::kNo, n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Conv1d(benchmark::State& state) {
  Conv1dGeometry g{41, 64, 10, 2, static_cast<std::size_t>(state.range(0))};
  const auto x = noise(g.in_channels * g.length, 3);
  const auto w = noise(g.out_channels * g.in_channels * g.kernel, 4);
  const auto b = noise(g.out_channels, 5);
  std::vector<double> y(g.out_channels * g.out_length());
  for (auto _ : state) {
    if constexpr (Parallel) conv1d_forward(g, x, w, b, y);
    else reference::conv1d_forward(g, x, w, b, y);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Arg(64)->Arg(256);
BENCHMARK(BM_Conv1d<false>)->Arg(300)->Arg(1200);
BENCHMARK(BM_Conv1d<true>)->Arg(300)->Arg(1200);

BENCHMARK_MAIN();
