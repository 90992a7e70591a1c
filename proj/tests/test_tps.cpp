#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "warpdetect/errors.hpp"
#include "warpdetect/tps.hpp"

using namespace wd;

namespace {

ControlPointSet random_points(std::mt19937_64& rng, std::size_t n, double jitter) {
  std::uniform_real_distribution<double> pos(-1.0, 1.0), d(-jitter, jitter);
  ControlPointSet pts;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 s{pos(rng), pos(rng)};
    pts.source.push_back(s);
    pts.target.push_back({s.x + d(rng), s.y + d(rng)});
  }
  return pts;
}

double max_weight(const TpsParams& p) {
  double m = 0.0;
  for (const auto& w : p.weights) m = std::max({m, std::abs(w[0]), std::abs(w[1])});
  return m;
}

}  // namespace

TEST(TpsKernel, Values) {
  EXPECT_EQ(tps_kernel(0.0), 0.0);
  EXPECT_EQ(tps_kernel(1.0), 0.0);
  EXPECT_NEAR(tps_kernel(std::numbers::e), 7.3890560989306495, 1e-12);
  EXPECT_THROW(tps_kernel(-0.1), DomainError);
}

TEST(TpsFit, IdentityCorrespondences) {
  std::mt19937_64 rng(1);
  auto pts = random_points(rng, 6, 0.0);
  for (double lambda : {0.0, 0.1, 10.0}) {
    const TpsParams p = fit_tps(pts, lambda);
    EXPECT_NEAR(p.affine[0][1], 1.0, 1e-12);
    EXPECT_NEAR(p.affine[1][2], 1.0, 1e-12);
    EXPECT_NEAR(p.affine[0][0], 0.0, 1e-12);
    EXPECT_NEAR(p.affine[0][2], 0.0, 1e-12);
    EXPECT_NEAR(p.affine[1][0], 0.0, 1e-12);
    EXPECT_NEAR(p.affine[1][1], 0.0, 1e-12);
    EXPECT_LE(max_weight(p), 1e-12);
    EXPECT_LE(bending_energy(p), 1e-10);
  }
}

TEST(TpsFit, CornerTranslationIsAffine) {
  ControlPointSet pts;
  pts.source = {{-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
  for (auto s : pts.source) pts.target.push_back({s.x + 0.1, s.y});
  const TpsParams p = fit_tps(pts, 0.0);
  EXPECT_NEAR(p.affine[0][0], 0.1, 1e-12);
  EXPECT_NEAR(p.affine[0][1], 1.0, 1e-12);
  EXPECT_LE(max_weight(p), 1e-12);
  EXPECT_LE(bending_energy(p), 1e-10);
}

TEST(TpsFit, MatchesDenseSolveAndInterpolates) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto pts = random_points(rng, 5 + static_cast<std::size_t>(trial % 8), 0.3);
    const TpsParams p = fit_tps(pts, 0.0);
    EXPECT_LE(max_abs_diff(p.coefficients(), oracle::tps_dense_solve(pts, 0.0)), 1e-9);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Point2 q = tps_transform(p, pts.source[i]);
      EXPECT_LE(std::hypot(q.x - pts.target[i].x, q.y - pts.target[i].y), 1e-9);
    }
  }
}

TEST(TpsFit, SideConditionsForEveryLambda) {
  std::mt19937_64 rng(3);
  for (double lambda : {0.0, 0.01, 1.0, 100.0}) {
    const auto pts = random_points(rng, 9, 0.4);
    const TpsParams p = fit_tps(pts, lambda);
    for (int c = 0; c < 2; ++c) {
      double s = 0, sx = 0, sy = 0;
      for (std::size_t i = 0; i < p.size(); ++i) {
        s += p.weights[i][static_cast<std::size_t>(c)];
        sx += p.weights[i][static_cast<std::size_t>(c)] * p.source[i].x;
        sy += p.weights[i][static_cast<std::size_t>(c)] * p.source[i].y;
      }
      EXPECT_LE(std::abs(s), 1e-8);
      EXPECT_LE(std::abs(sx), 1e-8);
      EXPECT_LE(std::abs(sy), 1e-8);
    }
    EXPECT_LE(max_abs_diff(p.coefficients(), oracle::tps_dense_solve(pts, lambda)), 1e-8);
  }
}

TEST(TpsFit, AffineReproductionAtEveryLambda) {
  std::mt19937_64 rng(4);
  auto pts = random_points(rng, 8, 0.0);
  for (auto& t : pts.target) t = {0.2 + 0.9 * t.x - 0.3 * t.y, -0.1 + 0.4 * t.x + 1.1 * t.y};
  for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
    EXPECT_LE(max_weight(fit_tps(pts, lambda)), 1e-8);
  }
}

TEST(TpsFit, LargeLambdaApproachesLeastSquaresAffine) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = random_points(rng, 10, 0.3);
    const TpsParams p = fit_tps(pts, 1e6);
    const Tensor ls = oracle::affine_least_squares(pts);
    const TpsParams direct = fit_affine(pts);
    for (std::size_t k = 0; k < 3; ++k) {
      for (std::size_t c = 0; c < 2; ++c) {
        EXPECT_NEAR(p.affine[c][k], ls.at({k, c}), 1e-3);
        EXPECT_NEAR(direct.affine[c][k], ls.at({k, c}), 1e-10);
      }
    }
    EXPECT_LE(max_weight(p), 1e-4);
  }
}

TEST(TpsFit, EnergyNonincreasingAlongLambdaLadder) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto pts = random_points(rng, 7, 0.3);
    double prev = INFINITY;
    for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0}) {
      const double e = bending_energy(fit_tps(pts, lambda));
      EXPECT_GE(e, 0.0);
      EXPECT_LE(e, prev);
      prev = e;
    }
  }
}

TEST(TpsFit, EnergyMatchesQuadrature) {
  for (const auto& pts : oracle::bending_fixtures()) {
    const TpsParams p = fit_tps(pts, 0.0);
    const double closed = bending_energy(p);
    ASSERT_GT(closed, 0.0);
    const double quad = oracle::bending_quadrature(p);
    EXPECT_NEAR(quad / closed, 1.0, 0.01);
  }
}

TEST(TpsFit, Errors) {
  ControlPointSet line;
  line.source = {{0, 0}, {0.5, 0.5}, {1, 1}, {-1, -1}};
  line.target = line.source;
  try {
    fit_tps(line, 0.0);
    FAIL() << "collinear sources accepted";
  } catch (const FitError& e) {
    EXPECT_NE(std::string(e.what()).find("degenerate control points"), std::string::npos);
  }
  ControlPointSet dup;
  dup.source = {{0, 0}, {0, 0}, {1, 0}, {0, 1}};
  dup.target = dup.source;
  EXPECT_THROW(fit_tps(dup, 0.0), FitError);
  std::mt19937_64 rng(8);
  EXPECT_THROW(fit_tps(random_points(rng, 5, 0.1), -1.0), DomainError);
  ControlPointSet tiny;
  tiny.source = {{0, 0}, {1, 0}};
  tiny.target = tiny.source;
  EXPECT_THROW(tiny.validate(), ConfigError);
}

TEST(TpsTransform, FixedDemonstration) {
  TpsParams p;
  p.source = {{0, 0}, {1, 0}, {0, 1}};
  p.affine = {{{0.5, 1, 0}, {0.5, 0, 1}}};
  p.weights = {{0.1, 0.03}, {-0.05, 0.01}, {0.02, -0.02}};
  const Point2 q = tps_transform(p, {10, 5});
  EXPECT_NEAR(q.x, 33.833011880425786, 1e-11);
  EXPECT_NEAR(q.y, 11.510546355637832, 1e-11);
  const double affine[2][3] = {{0.5, 1, 0}, {0.5, 0, 1}};
  const Point2 r = oracle::tps_eval(p.source, affine, p.weights, {10, 5});
  EXPECT_NEAR(q.x, r.x, 1e-12);
  EXPECT_NEAR(q.y, r.y, 1e-12);
}

TEST(TpsGrid, IdentityLattice) {
  const auto p = TpsParams::identity({{0, 0}, {1, 0}, {0, 1}});
  const SamplingGrid g = make_grid(p, 3, 3);
  const double v[3] = {-1, 0, 1};
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g.at(i, j), (Point2{v[j], v[i]}));
  EXPECT_THROW(make_grid(p, 1, 3), ConfigError);
}

TEST(TpsGrid, TranslationShiftsX) {
  auto p = TpsParams::identity({{0, 0}, {1, 0}, {0, 1}});
  p.affine[0][0] = 0.5;
  const SamplingGrid g = make_grid(p, 4, 5);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(g.at(i, j).x, lattice_coord(j, 5) + 0.5, 1e-15);
}

TEST(TpsGrid, PointwiseReevaluation) {
  std::mt19937_64 rng(9);
  const TpsParams p = fit_tps(random_points(rng, 6, 0.3), 0.05);
  const SamplingGrid g = make_grid(p, 8, 8);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      const Point2 q = tps_transform(p, {lattice_coord(j, 8), lattice_coord(i, 8)});
      EXPECT_NEAR(g.at(i, j).x, q.x, 1e-12);
      EXPECT_NEAR(g.at(i, j).y, q.y, 1e-12);
    }
  }
}

TEST(TpsIo, ExactRoundTrip) {
  std::mt19937_64 rng(10);
  const TpsParams p = fit_tps(random_points(rng, 7, 0.3), 0.01);
  std::stringstream s;
  write_tps(s, p);
  const TpsParams q = read_tps(s);
  EXPECT_EQ(q.coefficients(), p.coefficients());
  EXPECT_EQ(q.source, p.source);
  EXPECT_EQ(q.lambda, p.lambda);
}

TEST(Lu, SolvesAndRejectsSingular) {
  LuFactorization lu({0, 2, 1, 1}, 2);
  std::vector<double> b{4, 3};
  lu.solve(b);
  EXPECT_NEAR(b[0], 1.0, 1e-15);
  EXPECT_NEAR(b[1], 2.0, 1e-15);
  EXPECT_THROW(LuFactorization({1, 2, 2, 4}, 2), FitError);
}
