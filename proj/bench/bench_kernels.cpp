// Serial reference kernels against the OpenMP ones on shapes taken from the
// 32x32 model.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "fbcgan/kernels.hpp"

namespace {

using fbc::kernels::ConvGeom;

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

ConvGeom geom_for(const benchmark::State& st) {
  ConvGeom g;
  g.batch = 8;
  g.in_channels = static_cast<int>(st.range(0));
  g.out_channels = static_cast<int>(st.range(1));
  g.height = g.width = static_cast<int>(st.range(2));
  g.kernel = static_cast<int>(st.range(3));
  g.stride = g.kernel == 4 ? 2 : 1;
  g.pad = 1;
  return g;
}

double conv_flops(const ConvGeom& g) {
  return 2.0 * g.batch * g.out_channels * g.out_height() * g.out_width() * static_cast<double>(g.patch_size());
}

template <bool Serial>
void BM_Gemm(benchmark::State& st) {
  const int m = static_cast<int>(st.range(0)), n = static_cast<int>(st.range(1)), k = static_cast<int>(st.range(2));
  auto a = random_vec(static_cast<std::size_t>(m) * k, 1), b = random_vec(static_cast<std::size_t>(k) * n, 2);
  std::vector<double> c(static_cast<std::size_t>(m) * n);
  for (auto _ : st) {
    if constexpr (Serial)
      fbc::kernels::serial::gemm(m, n, k, a.data(), b.data(), c.data(), false);
    else
      fbc::kernels::gemm(m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  st.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * k, benchmark::Counter::kIsIterationInvariantRate,
                                             benchmark::Counter::kIs1000);
}

template <bool Serial>
void BM_ConvForward(benchmark::State& st) {
  const ConvGeom g = geom_for(st);
  auto x = random_vec(static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, 3);
  auto w = random_vec(g.out_channels * g.patch_size(), 4);
  std::vector<double> bias(g.out_channels, 0.1);
  std::vector<double> y(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width());
  for (auto _ : st) {
    if constexpr (Serial)
      fbc::kernels::serial::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
    else
      fbc::kernels::conv2d_forward(g, x.data(), w.data(), bias.data(), y.data());
    benchmark::DoNotOptimize(y.data());
  }
  st.counters["GFLOPS"] =
      benchmark::Counter(conv_flops(g), benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <bool Serial>
void BM_ConvBackward(benchmark::State& st) {
  const ConvGeom g = geom_for(st);
  auto x = random_vec(static_cast<std::size_t>(g.batch) * g.in_channels * g.height * g.width, 3);
  auto w = random_vec(g.out_channels * g.patch_size(), 4);
  auto dy = random_vec(static_cast<std::size_t>(g.batch) * g.out_channels * g.out_height() * g.out_width(), 5);
  std::vector<double> dx(x.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : st) {
    if constexpr (Serial)
      fbc::kernels::serial::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    else
      fbc::kernels::conv2d_backward(g, x.data(), w.data(), dy.data(), dx.data(), dw.data(), db.data());
    benchmark::DoNotOptimize(dx.data());
  }
  st.counters["GFLOPS"] = benchmark::Counter(2 * conv_flops(g), benchmark::Counter::kIsIterationInvariantRate,
                                             benchmark::Counter::kIs1000);
}

template <bool Serial>
void BM_PlaneStats(benchmark::State& st) {
  const int planes = static_cast<int>(st.range(0));
  const std::size_t size = static_cast<std::size_t>(st.range(1));
  auto x = random_vec(planes * size, 6);
  std::vector<double> mean(planes), sd(planes);
  for (auto _ : st) {
    if constexpr (Serial)
      fbc::kernels::serial::plane_stats(planes, size, x.data(), mean.data(), sd.data());
    else
      fbc::kernels::plane_stats(planes, size, x.data(), mean.data(), sd.data());
    benchmark::DoNotOptimize(mean.data());
  }
}

// {in, out, size, kernel}
void conv_shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 8, 32, 3})->Args({32, 16, 16, 3})->Args({4, 16, 32, 3})->Args({32, 16, 32, 3})->Args({3, 16, 32, 4})
      ->Args({16, 32, 16, 4})->Unit(benchmark::kMicrosecond);
}

}  // namespace

BENCHMARK(BM_Gemm<true>)->Args({64, 1024, 144})->Args({16, 1024, 288})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Gemm<false>)->Args({64, 1024, 144})->Args({16, 1024, 288})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_ConvForward<true>)->Apply(conv_shapes);
BENCHMARK(BM_ConvForward<false>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<true>)->Apply(conv_shapes);
BENCHMARK(BM_ConvBackward<false>)->Apply(conv_shapes);
BENCHMARK(BM_PlaneStats<true>)->Args({8 * 64, 1024});
BENCHMARK(BM_PlaneStats<false>)->Args({8 * 64, 1024});

BENCHMARK_MAIN();
