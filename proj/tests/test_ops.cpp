#include <gtest/gtest.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "warpdetect/autodiff.hpp"
#include "warpdetect/errors.hpp"
#include "warpdetect/kernels.hpp"
#include "warpdetect/ops.hpp"

using namespace wd;

namespace {

Tensor run_unary(const Tensor& x, Var (*op)(Tape&, Var)) {
  Tape t(false);
  return t.value(op(t, t.input(x)));
}

}  // namespace

TEST(Tensor, ShapeAndAccess) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  t.at({1, 2}) = 4.0;
  EXPECT_EQ(t[5], 4.0);
  EXPECT_THROW(t.at({2, 0}), DimensionError);
  EXPECT_THROW(t.reshaped({4}), DimensionError);
  EXPECT_EQ(t.reshaped({3, 2}).shape(), (Shape{3, 2}));
}

TEST(Tensor, BinaryRoundTrip) {
  std::mt19937_64 rng(3);
  const Tensor t = Tensor::uniform({2, 3, 4}, -1, 1, rng);
  std::stringstream s;
  write_tensor(s, t);
  EXPECT_EQ(read_tensor(s), t);
}

TEST(Tape, ChainRuleThroughMulAndSum) {
  Tape t;
  const Var a = t.input(Tensor({3}, {1, 2, 3}), true);
  const Var b = t.input(Tensor({3}, {4, 5, 6}), true);
  t.backward(sum(t, mul(t, a, b)));
  EXPECT_EQ(t.grad(a), Tensor({3}, {4, 5, 6}));
  EXPECT_EQ(t.grad(b), Tensor({3}, {1, 2, 3}));
}

TEST(Tape, InferenceModeRecordsNoGradients) {
  Tape t(false);
  const Var a = t.input(Tensor({2}, {1, 2}), true);
  const Var s = sum_squares(t, a);
  EXPECT_EQ(t.value(s)[0], 5.0);
  EXPECT_FALSE(t.has_grad(a));
}

TEST(Conv, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(11);
  for (std::size_t stride : {1u, 2u}) {
    for (std::size_t pad : {0u, 1u, 3u}) {
      for (std::size_t k : {1u, 3u, 7u}) {
        if (pad > k) continue;
        const std::size_t size = stride == 2 ? 9 + (k % 2 == 1 ? 0 : 1) : 8;
        const Tensor x = Tensor::uniform({3, size, size}, -1, 1, rng);
        const Tensor w = Tensor::uniform({4, 3, k, k}, -1, 1, rng);
        const Tensor b = Tensor::uniform({4}, -1, 1, rng);
        if ((size + 2 * pad - k) % stride != 0) continue;
        const Tensor got = conv2d(x, w, b, stride, pad);
        EXPECT_LE(max_abs_diff(got, oracle::conv2d_loops(x, w, b, stride, pad)), 1e-12)
            << "k=" << k << " stride=" << stride << " pad=" << pad;
      }
    }
  }
}

TEST(Conv, RejectsBadGeometry) {
  EXPECT_THROW(kernels::conv_geometry(3, 8, 8, 4, 2, 2, 1, 0), ConfigError);
  EXPECT_THROW(kernels::conv_geometry(3, 8, 8, 4, 3, 3, 0, 0), ConfigError);
  EXPECT_THROW(kernels::conv_geometry(3, 8, 8, 4, 3, 3, 2, 0), ConfigError);
}

TEST(Pool, MatchesNestedLoopOracle) {
  std::mt19937_64 rng(12);
  const Tensor x = Tensor::uniform({5, 6, 8}, -2, 2, rng);
  Tape t(false);
  const Var v = t.input(x);
  EXPECT_LE(max_abs_diff(t.value(avg_pool2(t, v)), oracle::avg_pool2_loops(x)), 1e-12);
  EXPECT_LE(max_abs_diff(t.value(global_pool(t, v, PoolMode::average)), oracle::global_pool_loops(x, false)), 1e-12);
  EXPECT_LE(max_abs_diff(t.value(global_pool(t, v, PoolMode::max)), oracle::global_pool_loops(x, true)), 1e-12);
  EXPECT_LE(max_abs_diff(t.value(channel_pool(t, v, PoolMode::average)), oracle::channel_pool_loops(x, false)), 1e-12);
  EXPECT_LE(max_abs_diff(t.value(channel_pool(t, v, PoolMode::max)), oracle::channel_pool_loops(x, true)), 1e-12);
}

TEST(Pool, MaxRoutesGradientToFirstMaximum) {
  Tape t;
  const Var x = t.input(Tensor({1, 2, 2}, {3, 3, 1, 0}), true);
  t.backward(sum(t, global_pool(t, x, PoolMode::max)));
  EXPECT_EQ(t.grad(x), Tensor({1, 2, 2}, {1, 0, 0, 0}));
}

TEST(Elementwise, Activations) {
  const Tensor x({3}, {-1.0, 0.0, 2.0});
  const Tensor r = run_unary(x, relu);
  EXPECT_EQ(r, Tensor({3}, {0.0, 0.0, 2.0}));
  EXPECT_EQ(run_unary(x, sigmoid)[1], 0.5);
  EXPECT_NEAR(run_unary(x, wd::tanh)[2], std::tanh(2.0), 1e-15);
}

class KernelParity : public ::testing::TestWithParam<int> {};

TEST_P(KernelParity, SerialAndParallelAreBitIdentical) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  const auto g = kernels::conv_geometry(4, 12, 10, 6, 3, 3, 1, 1);
  const Tensor x = Tensor::uniform({4, 12, 10}, -1, 1, rng);
  const Tensor w = Tensor::uniform({6, 4, 3, 3}, -1, 1, rng);
  const Tensor b = Tensor::uniform({6}, -1, 1, rng);
  const Tensor dy = Tensor::uniform({6, g.out_h, g.out_w}, -1, 1, rng);
  Tensor y1({6, g.out_h, g.out_w}), y2 = y1;
  kernels::serial::conv2d_forward(g, x.data(), w.data(), b.data(), y1.data());
  kernels::omp::conv2d_forward(g, x.data(), w.data(), b.data(), y2.data());
  EXPECT_EQ(y1, y2);
  Tensor dx1(x.shape()), dx2(x.shape()), dw1(w.shape()), dw2(w.shape()), db1(b.shape()), db2(b.shape());
  kernels::serial::conv2d_backward_input(g, w.data(), dy.data(), dx1.data());
  kernels::omp::conv2d_backward_input(g, w.data(), dy.data(), dx2.data());
  kernels::serial::conv2d_backward_params(g, x.data(), dy.data(), dw1.data(), db1.data());
  kernels::omp::conv2d_backward_params(g, x.data(), dy.data(), dw2.data(), db2.data());
  EXPECT_EQ(dx1, dx2);
  EXPECT_EQ(dw1, dw2);
  EXPECT_EQ(db1, db2);

  kernels::SampleGeometry sg{3, 9, 7, 5, 6, kernels::PaddingMode::zeros};
  const Tensor img = Tensor::uniform({3, 9, 7}, -1, 1, rng);
  const Tensor grid = Tensor::uniform({5, 6, 2}, -1.2, 1.2, rng);
  const Tensor sdy = Tensor::uniform({3, 5, 6}, -1, 1, rng);
  for (auto mode : {kernels::PaddingMode::zeros, kernels::PaddingMode::clamp}) {
    sg.padding = mode;
    Tensor o1({3, 5, 6}), o2 = o1;
    kernels::serial::bilinear_forward(sg, img.data(), grid.data(), o1.data());
    kernels::omp::bilinear_forward(sg, img.data(), grid.data(), o2.data());
    EXPECT_EQ(o1, o2);
    Tensor gx1(img.shape()), gx2(img.shape()), gg1(grid.shape()), gg2(grid.shape());
    kernels::serial::bilinear_backward(sg, img.data(), grid.data(), sdy.data(), gx1.data(), gg1.data());
    kernels::omp::bilinear_backward(sg, img.data(), grid.data(), sdy.data(), gx2.data(), gg2.data());
    EXPECT_EQ(gx1, gx2);
    EXPECT_EQ(gg1, gg2);
  }

  const Tensor m = Tensor::uniform({40, 19}, -1, 1, rng);
  const Tensor v = Tensor::uniform({19, 2}, -1, 1, rng);
  const Tensor mdy = Tensor::uniform({40, 2}, -1, 1, rng);
  Tensor r1({40, 2}), r2 = r1, d1({19, 2}), d2 = d1;
  kernels::serial::matmul(40, 19, 2, m.data(), v.data(), r1.data());
  kernels::omp::matmul(40, 19, 2, m.data(), v.data(), r2.data());
  kernels::serial::matmul_backward(40, 19, 2, m.data(), mdy.data(), d1.data());
  kernels::omp::matmul_backward(40, 19, 2, m.data(), mdy.data(), d2.data());
  EXPECT_EQ(r1, r2);
  EXPECT_EQ(d1, d2);
}

INSTANTIATE_TEST_SUITE_P(Seeds, KernelParity, ::testing::Range(0, 5));

TEST(Threads, EnvironmentCapsWorkers) {
  ::setenv("WARPDETECT_THREADS", "2", 1);
  EXPECT_EQ(kernels::configured_threads(), 2);
  ::unsetenv("WARPDETECT_THREADS");
  EXPECT_GE(kernels::configured_threads(), 1);
}
