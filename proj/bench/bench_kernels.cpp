// Serial reference vs OpenMP kernels at the sizes the model uses.
#include <benchmark/benchmark.h>

#include <random>

#include "warpdetect/kernels.hpp"
#include "warpdetect/tensor.hpp"

namespace {

using wd::Tensor;
namespace k = wd::kernels;

struct ConvCase {
  k::ConvGeometry g;
  Tensor x, w, b, dy;
};

// args: c_in, size, c_out
ConvCase conv_case(const benchmark::State& state) {
  const auto c_in = static_cast<std::size_t>(state.range(0));
  const auto size = static_cast<std::size_t>(state.range(1));
  const auto c_out = static_cast<std::size_t>(state.range(2));
  std::mt19937_64 rng(1);
  ConvCase c{k::conv_geometry(c_in, size, size, c_out, 3, 3, 1, 1), {}, {}, {}, {}};
  c.x = Tensor::uniform({c_in, size, size}, -1, 1, rng);
  c.w = Tensor::uniform({c_out, c_in, 3, 3}, -1, 1, rng);
  c.b = Tensor::uniform({c_out}, -1, 1, rng);
  c.dy = Tensor::uniform({c_out, size, size}, -1, 1, rng);
  return c;
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  const auto c = conv_case(state);
  Tensor y({c.g.c_out, c.g.out_h, c.g.out_w});
  for (auto _ : state) {
    if constexpr (Parallel) k::omp::conv2d_forward(c.g, c.x.data(), c.w.data(), c.b.data(), y.data());
    else k::serial::conv2d_forward(c.g, c.x.data(), c.w.data(), c.b.data(), y.data());
    benchmark::DoNotOptimize(y.data().data());
  }
}

template <bool Parallel>
void BM_ConvBackward(benchmark::State& state) {
  const auto c = conv_case(state);
  Tensor dx(c.x.shape()), dw(c.w.shape()), db(c.b.shape());
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::conv2d_backward_input(c.g, c.w.data(), c.dy.data(), dx.data());
      k::omp::conv2d_backward_params(c.g, c.x.data(), c.dy.data(), dw.data(), db.data());
    } else {
      k::serial::conv2d_backward_input(c.g, c.w.data(), c.dy.data(), dx.data());
      k::serial::conv2d_backward_params(c.g, c.x.data(), c.dy.data(), dw.data(), db.data());
    }
    benchmark::DoNotOptimize(dw.data().data());
  }
}

// args: image size (square, 3 channels, same-size output)
template <bool Parallel>
void BM_Bilinear(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  const k::SampleGeometry g{3, n, n, n, n, k::PaddingMode::zeros};
  const Tensor img = Tensor::uniform({3, n, n}, 0, 1, rng);
  const Tensor grid = Tensor::uniform({n, n, 2}, -1.1, 1.1, rng);
  const Tensor dy = Tensor::uniform({3, n, n}, -1, 1, rng);
  Tensor y({3, n, n}), dx({3, n, n}), dgrid({n, n, 2});
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::bilinear_forward(g, img.data(), grid.data(), y.data());
      k::omp::bilinear_backward(g, img.data(), grid.data(), dy.data(), dx.data(), dgrid.data());
    } else {
      k::serial::bilinear_forward(g, img.data(), grid.data(), y.data());
      k::serial::bilinear_backward(g, img.data(), grid.data(), dy.data(), dx.data(), dgrid.data());
    }
    benchmark::DoNotOptimize(dgrid.data().data());
  }
}

// TPS grid evaluation shape: [pixels, N+3] x [N+3, 2].
template <bool Parallel>
void BM_Matmul(benchmark::State& state) {
  const auto rows = static_cast<std::size_t>(state.range(0));
  const std::size_t inner = 19, cols = 2;
  std::mt19937_64 rng(3);
  const Tensor m = Tensor::uniform({rows, inner}, -1, 1, rng);
  const Tensor x = Tensor::uniform({inner, cols}, -1, 1, rng);
  const Tensor dy = Tensor::uniform({rows, cols}, -1, 1, rng);
  Tensor y({rows, cols}), dx({inner, cols});
  for (auto _ : state) {
    if constexpr (Parallel) {
      k::omp::matmul(rows, inner, cols, m.data(), x.data(), y.data());
      k::omp::matmul_backward(rows, inner, cols, m.data(), dy.data(), dx.data());
    } else {
      k::serial::matmul(rows, inner, cols, m.data(), x.data(), y.data());
      k::serial::matmul_backward(rows, inner, cols, m.data(), dy.data(), dx.data());
    }
    benchmark::DoNotOptimize(dx.data().data());
  }
}

const auto conv_args = [](benchmark::internal::Benchmark* b) {
  b->Args({3, 64, 8})->Args({8, 32, 16})->Args({8, 16, 32})->Args({32, 8, 32})->Args({32, 64, 32});
};

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->Apply(conv_args);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/omp")->Apply(conv_args);
BENCHMARK(BM_Bilinear<false>)->Name("bilinear/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Bilinear<true>)->Name("bilinear/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(4096)->Arg(65536);
BENCHMARK(BM_Matmul<true>)->Name("matmul/omp")->Arg(4096)->Arg(65536);

BENCHMARK_MAIN();
