// Serial reference vs OpenMP kernels. Shapes follow the models: a TextCNN
// convolution over a 150-token report, and LSTM-sized dense products.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "meshgen/kernels.hpp"

namespace k = meshgen::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 g(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(g);
  return v;
}

k::MatDims mat_dims(const benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  return {n, n, 4 * n};
}

template <auto Fn>
void BM_matmul(benchmark::State& st) {
  const auto d = mat_dims(st);
  const auto a = random_vec(d.rows * d.inner, 1), b = random_vec(d.inner * d.cols, 2);
  std::vector<double> out(d.rows * d.cols);
  for (auto _ : st) {
    Fn(a, b, out, d);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(d.rows * d.inner * d.cols));
}

template <auto Fn>
void BM_matmul_grad_b(benchmark::State& st) {
  const auto d = mat_dims(st);
  const auto a = random_vec(d.rows * d.inner, 1), g = random_vec(d.rows * d.cols, 2);
  std::vector<double> gb(d.inner * d.cols);
  for (auto _ : st) {
    Fn(a, g, gb, d);
    benchmark::DoNotOptimize(gb.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(d.rows * d.inner * d.cols));
}

k::ConvDims conv_dims(const benchmark::State& st) {
  return {150, static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)), 100};
}

template <auto Fn>
void BM_conv1d(benchmark::State& st) {
  const auto d = conv_dims(st);
  const auto seq = random_vec(d.length * d.width, 1), f = random_vec(d.filters * d.window * d.width, 2),
             bias = random_vec(d.filters, 3);
  std::vector<double> out(d.out_length() * d.filters);
  for (auto _ : st) {
    Fn(seq, f, bias, out, d);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(d.out_length() * d.filters * d.window * d.width));
}

template <auto Fn>
void BM_conv1d_grad_filters(benchmark::State& st) {
  const auto d = conv_dims(st);
  const auto g = random_vec(d.out_length() * d.filters, 1), seq = random_vec(d.length * d.width, 2);
  std::vector<double> gf(d.filters * d.window * d.width), gb(d.filters);
  for (auto _ : st) {
    Fn(g, seq, gf, gb, d);
    benchmark::DoNotOptimize(gf.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(d.out_length() * d.filters * d.window * d.width));
}

}  // namespace

BENCHMARK(BM_matmul<k::serial::matmul>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul<k::omp::matmul>)->Name("matmul/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul_grad_b<k::serial::matmul_grad_b>)->Name("matmul_grad_b/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_matmul_grad_b<k::omp::matmul_grad_b>)->Name("matmul_grad_b/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_conv1d<k::serial::conv1d>)->Name("conv1d/serial")->Args({100, 3})->Args({100, 5});
BENCHMARK(BM_conv1d<k::omp::conv1d>)->Name("conv1d/omp")->Args({100, 3})->Args({100, 5});
BENCHMARK(BM_conv1d_grad_filters<k::serial::conv1d_grad_filters>)
    ->Name("conv1d_grad_filters/serial")->Args({100, 3})->Args({100, 5});
BENCHMARK(BM_conv1d_grad_filters<k::omp::conv1d_grad_filters>)
    ->Name("conv1d_grad_filters/omp")->Args({100, 3})->Args({100, 5});

BENCHMARK_MAIN();
