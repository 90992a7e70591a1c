#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "warpdetect/autodiff.hpp"
#include "warpdetect/detect.hpp"
#include "warpdetect/errors.hpp"

using namespace wd;

TEST(Iou, Basics) {
  const Box a{0.5, 0.5, 0.2, 0.2};
  EXPECT_NEAR(iou(a, a), 1.0, 1e-14);
  EXPECT_EQ(iou(a, {0.9, 0.9, 0.1, 0.1}), 0.0);
  EXPECT_NEAR(iou({0.5, 0.5, 1.0, 1.0}, {1.0, 0.5, 1.0, 1.0}), 1.0 / 3.0, 1e-15);
}

TEST(Ciou, Values) {
  const Box a{0.4, 0.6, 0.3, 0.2};
  EXPECT_EQ(ciou_loss(a, a), 0.0);
  const Box moved{0.45, 0.6, 0.3, 0.2};
  const double i = iou(a, moved);
  // v = 0: 1 - IoU + rho^2 / c^2 with c the enclosing diagonal.
  const double c2 = 0.35 * 0.35 + 0.2 * 0.2;
  EXPECT_NEAR(ciou_loss(moved, a), 1.0 - i + 0.05 * 0.05 / c2, 1e-15);
  EXPECT_NEAR(ciou_loss({0.5, 0.5, 0.2, 0.2}, {0.6, 0.5, 0.2, 0.4}), 0.8420907787298144, 1e-14);
  EXPECT_THROW(ciou_loss(a, {0.5, 0.5, 0.0, 0.1}), DomainError);
}

TEST(Ciou, RangeAndZeroOnlyWhenIdentical) {
  std::mt19937_64 rng(1);
  for (int k = 0; k < 2000; ++k) {
    const Box p = oracle::random_box(rng), g = oracle::random_box(rng);
    const double l = ciou_loss(p, g);
    EXPECT_GE(l, 0.0);
    EXPECT_LT(l, 3.0);
    EXPECT_GT(l, 0.0);
  }
}

TEST(Ciou, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    Box p = oracle::random_box(rng);
    const Box g{p.cx + 0.05, p.cy - 0.03, p.w * 1.3, p.h * 0.8};
    std::array<double, 4> grad;
    ciou_loss_grad(p, g, grad);
    double* fields[4] = {&p.cx, &p.cy, &p.w, &p.h};
    for (int i = 0; i < 4; ++i) {
      const double x0 = *fields[i];
      *fields[i] = x0 + 1e-6;
      const double fp = ciou_loss(p, g);
      *fields[i] = x0 - 1e-6;
      const double fm = ciou_loss(p, g);
      *fields[i] = x0;
      const double num = (fp - fm) / 2e-6;
      EXPECT_LE(std::abs(num - grad[static_cast<std::size_t>(i)]) / std::max({std::abs(num), 1e-6}), 1e-4);
    }
  }
}

TEST(Dfl, Values) {
  const std::vector<double> flat(8, 0.3);
  for (double t : {0.0, 2.5, 7.0}) EXPECT_NEAR(dfl_loss(flat, t), std::log(8.0), 1e-14);
  const std::vector<double> l{0.3, -0.2, 1.1, 0.4, -0.7, 0.0, 0.25, 0.9};
  EXPECT_NEAR(dfl_loss(l, 2.5), 1.7269411857008978, 1e-14);
  std::vector<double> sharp(8, 0.0);
  sharp[3] = 40.0;
  EXPECT_LT(dfl_loss(sharp, 3.0), 1e-15);
  EXPECT_THROW(dfl_loss(l, -0.1), DomainError);
  EXPECT_THROW(dfl_loss(l, 7.5), DomainError);
}

TEST(Head, ZeroWeightsDecodeToCellCenters) {
  HeadConfig cfg;
  const auto head = HeadParams::zeros(16, cfg);
  Tape t(false);
  std::mt19937_64 rng(3);
  const auto out = head_forward(t, head, t.input(Tensor::uniform({16, 8, 8}, -1, 1, rng)));
  const auto dets = decode_detections(cfg, t.value(out.cls_logits), t.value(out.box_raw), 0.0);
  ASSERT_EQ(dets.size(), 64u);
  for (const auto& d : dets) EXPECT_EQ(d.score, 0.5);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) {
      const Box b = decode_box(cfg, t.value(out.box_raw), i, j);
      EXPECT_NEAR(b.w, cfg.size_prior, 1e-15);
      EXPECT_NEAR(b.h, cfg.size_prior, 1e-15);
      EXPECT_NEAR(b.cx, (j + 0.5) / 8.0, 1e-15);
      EXPECT_NEAR(b.cy, (i + 0.5) / 8.0, 1e-15);
    }
  }
}

TEST(Head, DecodedBoxesSatisfyInvariants) {
  for (bool dfl : {false, true}) {
    HeadConfig cfg;
    cfg.dfl = dfl;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      std::mt19937_64 rng(seed);
      auto head = HeadParams::create(16, cfg, rng);
      head.cls_b.fill(0.0);
      Tape t(false);
      const Tensor feats = Tensor::uniform({16, 8, 8}, -3, 3, rng);
      const auto out = head_forward(t, head, t.input(feats));
      const auto again = head_forward(t, head, t.input(feats));
      EXPECT_EQ(t.value(out.cls_logits), t.value(again.cls_logits));
      for (const auto& d : decode_detections(cfg, t.value(out.cls_logits), t.value(out.box_raw), 0.0)) {
        EXPECT_GT(d.box.w, 0.0);
        EXPECT_GT(d.box.h, 0.0);
        EXPECT_GT(d.score, 0.0);
        EXPECT_LT(d.score, 1.0);
        EXPECT_GE(d.box.cx, 0.0);
        EXPECT_LE(d.box.cx, 1.0);
        EXPECT_GE(d.box.cy, 0.0);
        EXPECT_LE(d.box.cy, 1.0);
      }
    }
  }
}

TEST(Head, ClassBiasStartsAtPrior) {
  HeadConfig cfg;
  std::mt19937_64 rng(4);
  const auto head = HeadParams::create(16, cfg, rng);
  for (double b : head.cls_b.data()) EXPECT_NEAR(1.0 / (1.0 + std::exp(-b)), cfg.cls_prior, 1e-12);
}

TEST(Loss, EmptySceneIsBackgroundBce) {
  HeadConfig cfg;
  const auto head = HeadParams::zeros(16, cfg);
  Tape t(false);
  const auto out = head_forward(t, head, t.input(Tensor({16, 8, 8}, 0.3)));
  LossBreakdown b;
  const Var l = total_loss(t, cfg, out, {}, &b);
  EXPECT_NEAR(t.value(l)[0], 8 * 8 * 3 * std::log(2.0), 1e-10);
  EXPECT_EQ(b.assigned, 0u);
}

TEST(Loss, DecreasesMonotonicallyOnFixedScene) {
  HeadConfig cfg;
  std::mt19937_64 rng(5);
  auto head = HeadParams::create(16, cfg, rng);
  const Tensor feats = Tensor::uniform({16, 8, 8}, 0, 1, rng);
  const std::vector<GroundTruthBox> gts = {{{0.3, 0.4, 0.2, 0.3}, 0}, {{0.7, 0.65, 0.25, 0.15}, 2}};
  double prev = INFINITY, first = 0.0;
  for (int step = 0; step < 50; ++step) {
    Tape t;
    const auto out = head_forward(t, head, t.input(feats));
    const Var l = total_loss(t, cfg, out, gts);
    const double v = t.value(l)[0];
    EXPECT_LT(v, prev) << "step " << step;
    if (step == 0) first = v;
    prev = v;
    t.backward(l);
    for (Tensor* p : {&head.cls_w, &head.cls_b, &head.box_w, &head.box_b}) {
      const Tensor g = *t.parameter_grad(*p);
      for (std::size_t i = 0; i < p->size(); ++i) (*p)[i] -= 1e-4 * g[i];
    }
  }
  EXPECT_LT(prev, first);
}

TEST(Loss, SaturatedPerfectPrediction) {
  HeadConfig cfg;
  cfg.size_prior = 0.25;
  auto head = HeadParams::zeros(1, cfg);
  const GroundTruthBox gt{{(3 + 0.5) / 8.0, (4 + 0.5) / 8.0, 0.25, 0.25}, 1};
  // Background logits -30 everywhere, +30 for the gt class at its cell.
  head.cls_b.fill(-30.0);
  head.cls_w.at({1, 0, 0, 0}) = 60.0;
  Tensor feats({1, 8, 8});
  feats.at({0, 4, 3}) = 1.0;
  Tape t(false);
  const auto out = head_forward(t, head, t.input(feats));
  EXPECT_LT(t.value(total_loss(t, cfg, out, std::vector<GroundTruthBox>{gt}))[0], 1e-3);
}

TEST(Nms, Examples) {
  const Detection d{{0.5, 0.5, 0.2, 0.2}, 0, 0.9};
  EXPECT_EQ(nms({d}, 0.5, 0.0), std::vector<Detection>{d});
  Detection e = d;
  e.score = 0.8;
  EXPECT_EQ(nms({e, d}, 0.5, 0.0), std::vector<Detection>{d});
  Detection other = e;
  other.class_id = 1;
  EXPECT_EQ(nms({e, d, other}, 0.5, 0.0).size(), 2u);
}

TEST(Nms, MatchesBruteForceAndInvariants) {
  std::mt19937_64 rng(6);
  for (int inst = 0; inst < 200; ++inst) {
    const auto dets = oracle::random_nms_instance(rng, 20);
    const auto kept = nms(dets, 0.45, 0.2);
    EXPECT_EQ(kept, oracle::nms_brute(dets, 0.45, 0.2));
    EXPECT_EQ(nms(kept, 0.45, 0.2), kept);
    for (const auto& k : kept) EXPECT_NE(std::find(dets.begin(), dets.end(), k), dets.end());
    for (std::size_t i = 0; i < kept.size(); ++i)
      for (std::size_t j = i + 1; j < kept.size(); ++j)
        if (kept[i].class_id == kept[j].class_id) {
          EXPECT_LE(iou(kept[i].box, kept[j].box), 0.45);
        }
  }
}

TEST(Detections, TextRoundTrip) {
  const std::vector<Detection> d = {{{0.1, 0.2, 0.3, 0.4}, 2, 0.123456789012345678},
                                    {{0.5, 0.5, 0.1, 0.1}, 0, 0.5}};
  std::stringstream s;
  write_detections(s, d);
  EXPECT_EQ(read_detections(s), d);
}
