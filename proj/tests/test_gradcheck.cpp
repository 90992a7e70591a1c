#include <gtest/gtest.h>

#include <cmath>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/errors.hpp"
#include "warpdetect/gradcheck.hpp"
#include "warpdetect/gradsuite.hpp"
#include "warpdetect/ops.hpp"

using namespace wd;

class GradSuite : public ::testing::TestWithParam<std::string> {};

TEST_P(GradSuite, TenSeedsWithinTolerance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = run_gradcheck(GetParam(), seed);
    EXPECT_TRUE(r.pass) << GetParam() << " seed " << seed << " err " << r.max_relative_error;
    EXPECT_GT(r.coordinates_checked, 0u);
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, GradSuite, ::testing::ValuesIn(gradcheck_ops()),
                         [](const auto& info) { return info.param; });

TEST(Gradcheck, CatchesAWrongGradient) {
  // sigmoid forward with a deliberately wrong backward.
  const ScalarFunction bad = [](Tape& t, std::span<const Var> in) {
    Tensor v = t.value(in[0]);
    for (auto& x : v.data()) x = x * x;
    const Var out = t.record(v, {in[0]}, [x = in[0]](Tape& tp, Var o) {
      const Tensor g = tp.grad(o);
      Tensor dx = tp.value(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = 3.0 * dx[i] * g[i];
      tp.accumulate(x, dx.data());
    });
    return sum(t, out);
  };
  const auto r = gradcheck("bad", bad, {Tensor({3}, {0.5, -1.0, 2.0})});
  EXPECT_FALSE(r.pass);
}

TEST(Gradcheck, UnknownOpRejected) { EXPECT_THROW(run_gradcheck("nope", 0), ConfigError); }
