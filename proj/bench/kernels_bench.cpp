// Serial reference vs OpenMP kernels on model-sized shapes.
//   ./hgtnet_bench --benchmark_filter=Conv

#include <benchmark/benchmark.h>

#include <vector>

#include "hgtnet/kernels.hpp"
#include "hgtnet/rng.hpp"

namespace {

using namespace hgt;

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const kernels::GemmShape s{n, n, n, false, false};
  const auto a = random_buffer(n * n, 1);
  const auto b = random_buffer(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::gemm(s, a, b, c, false);
    } else {
      kernels::serial::gemm(s, a, b, c, false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

// CNN-branch block: 3x3 conv, padding 1, on a batch of 16 images.
kernels::Conv2dShape conv_shape(std::size_t size, std::size_t in_c, std::size_t out_c) {
  kernels::Conv2dShape s;
  s.batch = 16;
  s.in_channels = in_c;
  s.out_channels = out_c;
  s.height = s.width = size;
  s.kernel_h = s.kernel_w = 3;
  s.stride = 1;
  s.padding = 1;
  s.out_h = s.out_w = size;
  return s;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape(static_cast<std::size_t>(state.range(0)), 16, 32);
  const auto x = random_buffer(s.batch * s.in_channels * s.height * s.width, 3);
  const auto w = random_buffer(s.out_channels * s.in_channels * 9, 4);
  const auto bias = random_buffer(s.out_channels, 5);
  std::vector<double> y(s.batch * s.out_channels * s.out_h * s.out_w);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::conv2d_forward(s, x, w, bias, y);
    } else {
      kernels::serial::conv2d_forward(s, x, w, bias, y);
    }
    benchmark::DoNotOptimize(y.data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto s = conv_shape(static_cast<std::size_t>(state.range(0)), 16, 32);
  const auto x = random_buffer(s.batch * s.in_channels * s.height * s.width, 6);
  const auto w = random_buffer(s.out_channels * s.in_channels * 9, 7);
  const auto dy = random_buffer(s.batch * s.out_channels * s.out_h * s.out_w, 8);
  std::vector<double> dx(x.size()), dw(w.size()), db(s.out_channels);
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::omp::conv2d_backward_input(s, dy, w, dx);
      kernels::omp::conv2d_backward_params(s, dy, x, dw, db);
    } else {
      kernels::serial::conv2d_backward_input(s, dy, w, dx);
      kernels::serial::conv2d_backward_params(s, dy, x, dw, db);
    }
    benchmark::DoNotOptimize(dx.data());
    benchmark::DoNotOptimize(dw.data());
  }
}

BENCHMARK(BM_Gemm<false>)->Name("Gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("Gemm/omp")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_ConvForward<false>)->Name("ConvForward/serial")->Arg(32)->Arg(56);
BENCHMARK(BM_ConvForward<true>)->Name("ConvForward/omp")->Arg(32)->Arg(56);
BENCHMARK(BM_ConvBackward<false>)->Name("ConvBackward/serial")->Arg(32)->Arg(56);
BENCHMARK(BM_ConvBackward<true>)->Name("ConvBackward/omp")->Arg(32)->Arg(56);

}  // namespace

BENCHMARK_MAIN();
