// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "posvit/augment.hpp"
#include "posvit/dataset.hpp"
#include "posvit/errors.hpp"
#include "posvit/metrics.hpp"
#include "posvit/ops.hpp"
#include "posvit/optim.hpp"
#include "posvit/pretrainer.hpp"
#include "posvit/trainer.hpp"
#include "support.hpp"

namespace posvit {
namespace {

using testing::random_pixels;
using testing::tiny_config;

TEST(AdamW, ZeroGradientOnlyDecays) {
  std::vector<double> p = {1.5, -2.0, 0.25}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
  const AdamWHyper h{.lr = 0.01, .weight_decay = 0.05};
  adamw_update(p, g, m, v, 1, h, true);
  EXPECT_EQ(p, (std::vector<double>{1.5 * (1 - 0.01 * 0.05), -2.0 * (1 - 0.01 * 0.05), 0.25 * (1 - 0.01 * 0.05)}));
  std::vector<double> q = {1.5};
  std::vector<double> g1(1, 0.0), m1(1, 0.0), v1(1, 0.0);
  adamw_update(q, g1, m1, v1, 1, h, false);
  EXPECT_EQ(q[0], 1.5);
}

TEST(AdamW, SingleStepMatchesHandEvaluation) {
  std::vector<double> p = {0.3}, g = {1.0}, m = {0.0}, v = {0.0};
  const AdamWHyper h{.lr = 0.001, .beta1 = 0.9, .beta2 = 0.999, .eps = 1e-8, .weight_decay = 0.0};
  adamw_update(p, g, m, v, 1, h, true);
  // m_hat = 1, v_hat = 1 after bias correction.
  EXPECT_NEAR(p[0] - 0.3, -0.001 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(m[0], 0.1, 1e-15);
  EXPECT_NEAR(v[0], 0.001, 1e-15);
}

TEST(AdamW, ConstantGradientStepApproachesLearningRate) {
  std::vector<double> p = {0.0}, g = {-3.0}, m = {0.0}, v = {0.0};
  const AdamWHyper h{.lr = 0.01, .weight_decay = 0.0};
  double prev = 0.0;
  for (std::size_t t = 1; t <= 2000; ++t) {
    prev = p[0];
    adamw_update(p, g, m, v, t, h, false);
  }
  EXPECT_NEAR(p[0] - prev, 0.01, 1e-8);
}

TEST(AdamW, NonFiniteGradientRejected) {
  ParameterList params = {{"w", Tensor::from_data({2}, {1.0, 2.0}, true), true}};
  backward(sum(mul(params[0].tensor, Tensor::from_data({2}, {std::numeric_limits<double>::quiet_NaN(), 1.0}))));
  AdamWState state = make_adamw_state(params);
  EXPECT_THROW(adamw_step(params, state, {}), NumericError);
}

TEST(AdamW, StepUsesFlagsAndCounts) {
  ParameterList params = {{"w", Tensor::from_data({1}, {1.0}, true), true},
                          {"b", Tensor::from_data({1}, {1.0}, true), false}};
  AdamWState state = make_adamw_state(params);
  adamw_step(params, state, {.lr = 0.1, .weight_decay = 0.5});
  EXPECT_EQ(state.step, 1u);
  EXPECT_EQ(params[0].tensor.data()[0], 1.0 - 0.1 * 0.5);
  EXPECT_EQ(params[1].tensor.data()[0], 1.0);
}

TEST(Schedule, WarmupThenCosine) {
  EXPECT_EQ(lr_at(0, 1000, 100, 1e-3), 0.0);
  EXPECT_NEAR(lr_at(50, 1000, 100, 1e-3), 0.5e-3, 1e-15);
  EXPECT_NEAR(lr_at(100, 1000, 100, 1e-3), 1e-3, 1e-15);
  EXPECT_NEAR(lr_at(550, 1000, 100, 1e-3), 0.5e-3, 1e-15);
  EXPECT_LT(lr_at(999, 100000, 10, 1e-3), 1e-3);
  EXPECT_LT(lr_at(99999, 100000, 10, 1e-3), 1e-3 * 1e-4);
  const double mid = lr_at(325, 1000, 100, 1e-3);
  EXPECT_NEAR(mid, 1e-3 * 0.5 * (1 + std::cos(std::numbers::pi * 0.25)), 1e-15);
}

TEST(GradClip, ScalesToMaxNorm) {
  ParameterList params = {{"w", Tensor::from_data({2}, {0.0, 0.0}, true), true}};
  backward(sum(mul(params[0].tensor, Tensor::from_data({2}, {30.0, 40.0}))));
  EXPECT_DOUBLE_EQ(grad_norm(params), 50.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 5.0), 50.0);
  EXPECT_NEAR(grad_norm(params), 5.0, 1e-6);
  zero_grads(params);
  EXPECT_EQ(grad_norm(params), 0.0);
}

TEST(Augment, NoFlagsIsIdentity) {
  const ImageShape shape{8, 8, 2};
  const auto img = random_pixels(shape.numel(), 1);
  Rng rng(2);
  EXPECT_EQ(augment(img, shape, {}, rng), img);
  const Tensor t = Tensor::from_data({8, 8, 2}, img);
  EXPECT_EQ(testing::values(augment(t, {}, rng)), img);
}

TEST(Augment, FlipsAreInvolutions) {
  const ImageShape shape{6, 4, 3};
  const auto img = random_pixels(shape.numel(), 3);
  EXPECT_EQ(hflip_image(hflip_image(img, shape), shape), img);
  EXPECT_EQ(vflip_image(vflip_image(img, shape), shape), img);
  EXPECT_NE(hflip_image(img, shape), img);
}

TEST(Augment, HorizontalFlipMirrorsPatchGrid) {
  const ModelConfig cfg = [] {
    ModelConfig c = tiny_config();
    c.image_height = c.image_width = 16;
    c.channels = 2;
    return c;
  }();
  const ImageShape shape{16, 16, 2};
  const auto img = random_pixels(shape.numel(), 4);
  const Tensor flipped = patchify_batch(hflip_image(img, shape), 1, cfg);
  const Tensor plain = patchify_batch(img, 1, cfg);
  const std::size_t g = 4, m = 4, c = 2;
  for (std::size_t pr = 0; pr < g; ++pr) {
    for (std::size_t pc = 0; pc < g; ++pc) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
          for (std::size_t k = 0; k < c; ++k) {
            const double got = flipped.at(pr * g + pc, (i * m + j) * c + k);
            const double want = plain.at(pr * g + (g - 1 - pc), (i * m + (m - 1 - j)) * c + k);
            ASSERT_EQ(got, want);
          }
        }
      }
    }
  }
}

TEST(Augment, FullAreaCropIsIdentity) {
  const ImageShape shape{8, 12, 1};
  const auto img = random_pixels(shape.numel(), 5);
  EXPECT_EQ(resized_crop(img, shape, 1.0, 0.3, 0.7), img);
  EXPECT_NE(resized_crop(img, shape, 0.6, 0.0, 0.0), img);
  EXPECT_THROW(resized_crop(img, shape, 0.0, 0.0, 0.0), ConfigError);
}

TEST(Augment, SeededAndLabelPreserving) {
  const ImageShape shape{8, 8, 1};
  const auto img = random_pixels(shape.numel(), 6);
  const Augmentations all{true, true, true};
  Rng a(7), b(7);
  EXPECT_EQ(augment(img, shape, all, a), augment(img, shape, all, b));
  EXPECT_EQ(absolute_targets(2, 2), (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(TopK, TieBreakAndBounds) {
  const std::vector<double> uniform(2 * 5, 0.0);
  const std::vector<std::size_t> zero = {0, 0}, last = {4, 4};
  EXPECT_EQ(topk_hits(uniform, 5, zero, 1), 2u);
  EXPECT_EQ(topk_hits(uniform, 5, last, 1), 0u);
  EXPECT_EQ(topk_hits(uniform, 5, last, 5), 2u);
  const Tensor perfect = Tensor::from_data({2, 3}, {0, 9, 1, 5, 0, 1});
  const std::vector<std::size_t> labels = {1, 0};
  EXPECT_EQ(topk_accuracy(perfect, labels, 1), 1.0);
  EXPECT_EQ(topk_accuracy(perfect, labels, 3), 1.0);
  const std::vector<std::size_t> second = {2, 2};
  EXPECT_EQ(topk_accuracy(perfect, second, 1), 0.0);
  EXPECT_EQ(topk_accuracy(perfect, second, 2), 1.0);
}

TEST(MetricsCsv, FormatsRows) {
  EXPECT_EQ(metrics_header(false), "epoch,ls,lp,joint,top1,top5,pos_top1,lr,seconds");
  EpochMetrics m;
  m.epoch = 3;
  m.ls = 2.302585092994046;
  m.joint = m.ls;
  m.top1 = 0.5;
  m.top5 = 1.0;
  m.lr = 0.001;
  EXPECT_EQ(metrics_row(m, false), "3,2.30258509,,2.30258509,0.5,1,,0.001,0");
  m.lp = 4.1588830833596715;
  m.pos_top1 = 0.015625;
  EXPECT_EQ(metrics_row(m, false), "3,2.30258509,4.15888308,2.30258509,0.5,1,0.015625,0.001,0");
  EXPECT_NE(metrics_header(true).find(",val_pos_top1"), std::string::npos);
  std::ostringstream out;
  const std::vector<EpochMetrics> rows = {m};
  write_metrics_csv(out, rows, false);
  EXPECT_EQ(out.str(), metrics_header(false) + "\n" + metrics_row(m, false) + "\n");
  EXPECT_EQ(pretrain_header(), "epoch,recon,lp,joint,pos_top1,lr,seconds");
}

Dataset tiny_data(std::size_t count, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.height = spec.width = 8;
  return make_synthetic(count, seed, spec);
}

TrainConfig quick_config(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.warmup_epochs = 0;
  t.batch_size = 4;
  t.base_lr = 3e-3;
  return t;
}

TEST(TrainSupervised, HeadlessRunHasNoPositionMetrics) {
  Model m = init_model(tiny_config(HeadMode::none), 1);
  TrainConfig t = quick_config(1);
  t.lambda = 0.0;
  const TrainResult r = train_supervised(m, tiny_data(8, 1), t);
  ASSERT_EQ(r.history.size(), 1u);
  EXPECT_FALSE(r.history[0].lp.has_value());
  EXPECT_FALSE(r.history[0].pos_top1.has_value());
  EXPECT_EQ(r.history[0].joint, r.history[0].ls);
}

TEST(TrainSupervised, OneEpochBeatsUniformBound) {
  Model m = init_model(ModelConfig{}, 2);  // 32x32 desk geometry, N = 64
  TrainConfig t = quick_config(1);
  t.batch_size = 2;
  t.base_lr = 1e-3;
  const Dataset data = make_synthetic(8, 2);
  const TrainResult r = train_supervised(m, data, t);
  ASSERT_FALSE(r.diverged) << r.error;
  const double bound = std::log(10.0) + 0.5 * std::log(64.0);
  EXPECT_LT(r.history[0].joint, bound);
}

TEST(TrainSupervised, SameSeedIsBitIdentical) {
  auto run = [] {
    Model m = init_model(tiny_config(HeadMode::rpl), 3);
    TrainConfig t = quick_config(2);
    t.augment = {true, true, false};
    return train_supervised(m, tiny_data(12, 3), t).history;
  };
  const auto a = run(), b = run();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_EQ(metrics_row(a[e], false), metrics_row(b[e], false));
  for (std::size_t e = 0; e < a.size(); ++e) EXPECT_EQ(a[e].joint, b[e].joint);
}

TEST(TrainSupervised, JointBookkeepingHolds) {
  Model m = init_model(tiny_config(HeadMode::both), 4);
  TrainConfig t = quick_config(3);
  t.lambda = 0.75;
  const TrainResult r = train_supervised(m, tiny_data(10, 4), t);
  ASSERT_EQ(r.history.size(), 3u);
  for (const auto& e : r.history) {
    ASSERT_TRUE(e.lp.has_value());
    EXPECT_NEAR(e.joint, e.ls + 0.75 * *e.lp, 1e-12);
    EXPECT_GE(e.top1, 0.0);
    EXPECT_LE(e.top5, 1.0);
  }
}

TEST(TrainSupervised, DivergenceKeepsPartialHistory) {
  Model m = init_model(tiny_config(HeadMode::apl), 5);
  Dataset data = tiny_data(8, 5);
  data.pixels[3] = std::numeric_limits<double>::quiet_NaN();
  const TrainResult r = train_supervised(m, data, quick_config(2));
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(r.history.empty());
  EXPECT_FALSE(r.error.empty());
}

TEST(TrainSupervised, RejectsMismatchedData) {
  Model m = init_model(tiny_config(HeadMode::apl), 5);
  EXPECT_THROW(train_supervised(m, make_synthetic(4, 1), quick_config(1)), ConfigError);
  TrainConfig bad = quick_config(1);
  bad.warmup_epochs = 3;
  EXPECT_THROW(train_supervised(m, tiny_data(4, 1), bad), ConfigError);
}

TEST(PretrainFinetune, FineTuneDropsPretrainOnlyParameters) {
  TrainConfig pre = quick_config(1), fine = quick_config(1);
  const auto r = pretrain_then_finetune(tiny_config(HeadMode::apl), tiny_data(8, 7), pre, fine);
  EXPECT_EQ(r.pretrain.history.size(), 1u);
  EXPECT_EQ(r.finetune.history.size(), 1u);
  bool has_pe = false;
  for (const auto& p : r.model.parameters()) {
    EXPECT_EQ(p.name.find("decoder"), std::string::npos) << p.name;
    EXPECT_NE(p.name.rfind("apl.", 0), 0u) << p.name;
    EXPECT_NE(p.name.rfind("rpl.", 0), 0u) << p.name;
    has_pe = has_pe || p.name.find("pos_embed") != std::string::npos;
  }
  EXPECT_TRUE(has_pe);
  EXPECT_FALSE(r.finetune.history[0].lp.has_value());
}

TEST(PretrainMae, LossDecreasesOverFiveEpochs) {
  MaeModel m = init_mae(tiny_config(HeadMode::apl), 8);
  TrainConfig t = quick_config(5);
  t.mask_ratio = 0.5;
  const PretrainResult r = pretrain_mae(m, tiny_data(16, 8), t);
  ASSERT_EQ(r.history.size(), 5u);
  EXPECT_LT(r.history.back().joint, r.history.front().joint);
  for (const auto& e : r.history) EXPECT_NEAR(e.joint, e.recon + 0.5 * *e.lp, 1e-12);
}

}  // namespace
}  // namespace posvit
