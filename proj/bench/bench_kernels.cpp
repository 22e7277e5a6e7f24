// Blocked/OpenMP kernels against the serial reference implementations.
//   ./statekit_bench --benchmark_filter=Gemm

#include <benchmark/benchmark.h>

#include <random>

#include "statekit/kernels.hpp"
#include "statekit/layers.hpp"
#include "statekit/parallel.hpp"
#include "statekit/reference.hpp"

using namespace statekit;
using kernels::Transpose;

namespace {

std::vector<float> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 engine(seed);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(engine);
  return v;
}

template <bool Reference>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n * n, 1), b = noise(n * n, 2);
  std::vector<float> c(n * n);
  parallel::ScopedMode mode(Reference);
  for (auto _ : state) {
    if constexpr (Reference) {
      ref::gemm<float>(Transpose::no, Transpose::no, n, n, n, a, b, c);
    } else {
      kernels::gemm<float>(Transpose::no, Transpose::no, n, n, n, a, b, c);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * n * n * n, benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

// One VGG-shaped conv layer: [1, C, S, S] -> [1, C, S, S].
template <bool Reference>
void BM_Conv3x3(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto s = static_cast<std::size_t>(state.range(1));
  const Tensor<float> x({1, c, s, s}, noise(c * s * s, 3));
  const Tensor<float> w({c, c, 3, 3}, noise(c * c * 9, 4));
  const Tensor<float> b({c}, 0.0f);
  parallel::ScopedMode mode(Reference);
  for (auto _ : state) {
    auto out = Reference ? ref::conv3x3_forward(x, w, b) : layers::conv3x3_forward(x, w, b);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.counters["GFLOP/s"] = benchmark::Counter(2.0 * 9 * c * c * s * s, benchmark::Counter::kIsIterationInvariantRate,
                                                 benchmark::Counter::kIs1000);
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Name("Gemm/reference")->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gemm<false>)->Name("Gemm/blocked")->Arg(64)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3<true>)->Name("Conv3x3/reference")->Args({64, 28})->Args({256, 14})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Conv3x3<false>)->Name("Conv3x3/im2col")->Args({64, 28})->Args({256, 14})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
