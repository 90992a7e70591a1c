#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <random>

#include "warpdetect/autodiff.hpp"
#include "warpdetect/errors.hpp"
#include "warpdetect/kernels.hpp"
#include "warpdetect/harness/model.hpp"
#include "warpdetect/harness/optimizer.hpp"
#include "warpdetect/harness/train.hpp"

using namespace wd;
using namespace wd::harness;

TEST(Model, CompositionPerVariant) {
  for (Variant v : all_variants()) {
    const Model m = build_model(v, {}, 1);
    EXPECT_EQ(m.loc.has_value(), has_stn(v));
    EXPECT_EQ(m.cbam.has_value(), has_cbam(v));
    if (has_stn(v)) {
      EXPECT_EQ(m.warp->config().mode, has_tps(v) ? WarpMode::tps : WarpMode::affine);
    }
  }
  Model yolo = build_model(Variant::yolo, {}, 1);
  for (const auto& [name, t] : yolo.parameters()) {
    EXPECT_EQ(name.find("stn"), std::string::npos);
    EXPECT_EQ(name.find("cbam"), std::string::npos);
  }
  EXPECT_LT(yolo.parameter_count(), build_model(Variant::stn, {}, 1).parameter_count());
  EXPECT_LT(build_model(Variant::stn_tps, {}, 1).parameter_count(),
            build_model(Variant::cbam_stn_tps, {}, 1).parameter_count());
  EXPECT_THROW(parse_variant("resnet"), ConfigError);
  for (Variant v : all_variants()) EXPECT_EQ(parse_variant(to_string(v)), v);
}

TEST(Model, ForwardOrderFollowsPipeline) {
  const Model m = build_model(Variant::cbam_stn_tps, {}, 2);
  std::mt19937_64 rng(3);
  Tape t(false);
  std::vector<std::string> trace;
  m.forward(t, t.input(Tensor::uniform({3, 64, 64}, 0, 1, rng)), &trace);
  const std::vector<std::string> expected = {"input", "stn.localize", "stn.tps_sample", "stem",
                                             "cbam", "backbone", "head"};
  EXPECT_EQ(trace, expected);
}

TEST(Model, AllVariantsShareOutputShapes) {
  std::mt19937_64 rng(4);
  const Tensor img = Tensor::uniform({3, 64, 64}, 0, 1, rng);
  for (Variant v : all_variants()) {
    const Model m = build_model(v, {}, 5);
    Tape t(false);
    const auto out = m.forward(t, t.input(img));
    EXPECT_EQ(t.value(out.cls_logits).shape(), (Shape{3, 8, 8}));
    EXPECT_EQ(t.value(out.box_raw).shape(), (Shape{4, 8, 8}));
  }
}

TEST(Model, FreshStnPassesInputThroughExactly) {
  std::mt19937_64 rng(6);
  const Tensor img = Tensor::uniform({3, 64, 64}, 0, 1, rng);
  for (Variant v : all_variants()) {
    if (!has_stn(v)) continue;
    for (std::uint64_t seed : {1u, 2u, 3u}) EXPECT_EQ(build_model(v, {}, seed).rectify(img), img);
  }
}

TEST(Model, ConfigValidation) {
  ModelConfig c;
  c.image_size = 60;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.stem_channels = 6;
  EXPECT_THROW(build_model(Variant::cbam_stn, c, 1), ConfigError);
}

TEST(AdamW, FirstStepMatchesHandUpdate) {
  Tensor p({2}, {1.0, -2.0});
  AdamWConfig cfg;
  AdamW opt({{"p", &p}}, cfg);
  opt.step({{0.5, -0.25}});
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps) plus decay.
  for (int i = 0; i < 2; ++i) {
    const double x0 = i == 0 ? 1.0 : -2.0, g = i == 0 ? 0.5 : -0.25;
    const double expected = x0 - cfg.lr * cfg.weight_decay * x0 - cfg.lr * g / (std::abs(g) + cfg.eps);
    EXPECT_NEAR(p[static_cast<std::size_t>(i)], expected, 1e-15);
  }
  EXPECT_EQ(opt.steps(), 1u);
  AdamWConfig bad;
  bad.lr = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

namespace {

Dataset small_set(std::size_t n, std::uint64_t stream) {
  DatasetSpec d;
  d.count = n;
  d.seed = 99;
  d.stream = stream;
  return gen_dataset(d);
}

TrainConfig quick(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 2;
  c.seed = 7;
  return c;
}

}  // namespace

TEST(Train, OneEpochSmoke) {
  const auto r = train(Variant::cbam_stn_tps, {}, small_set(4, 0), small_set(2, 1), quick(1));
  EXPECT_EQ(r.record.per_epoch_metrics.size(), 1u);
  EXPECT_EQ(r.record.train_loss.size(), 1u);
  EXPECT_EQ(r.record.best_epoch, 0u);
  EXPECT_TRUE(std::isfinite(r.record.train_loss[0]));
}

TEST(Train, SameSeedSameCurves) {
  const auto a = train(Variant::stn_tps, {}, small_set(6, 0), small_set(3, 1), quick(2));
  const auto b = train(Variant::stn_tps, {}, small_set(6, 0), small_set(3, 1), quick(2));
  EXPECT_EQ(a.record.train_loss, b.record.train_loss);
  EXPECT_EQ(a.record.per_epoch_metrics[1].map50, b.record.per_epoch_metrics[1].map50);
}

TEST(Train, ThreadCountDoesNotChangeResults) {
  const auto a = train(Variant::cbam_stn, {}, small_set(6, 0), small_set(3, 1), quick(1));
  ::setenv("WARPDETECT_THREADS", "1", 1);
  kernels::apply_thread_limit();
  const auto b = train(Variant::cbam_stn, {}, small_set(6, 0), small_set(3, 1), quick(1));
  ::unsetenv("WARPDETECT_THREADS");
  kernels::apply_thread_limit();
  EXPECT_EQ(a.record.train_loss, b.record.train_loss);
}

TEST(Train, StepLowersLossOnOneScene) {
  const Dataset one = small_set(1, 0);
  Model m = build_model(Variant::yolo, {}, 1);
  AdamW opt(m.parameters(), {});
  const double before = scene_loss(m, one[0]);
  const Scene* batch[] = {&one[0]};
  for (int k = 0; k < 20; ++k) train_step(m, opt, batch);
  EXPECT_LT(scene_loss(m, one[0]), before);
}

TEST(Train, DivergenceIsReported) {
  const Dataset one = small_set(1, 0);
  Model m = build_model(Variant::yolo, {}, 1);
  m.head.box_b.fill(std::nan(""));
  AdamW opt(m.parameters(), {});
  const Scene* batch[] = {&one[0]};
  EXPECT_THROW(train_step(m, opt, batch), DivergenceError);
}
