// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "blendsplat/checkpoint.hpp"
#include "blendsplat/densify.hpp"
#include "blendsplat/optimizer.hpp"
#include "blendsplat/synth.hpp"
#include "blendsplat/trainer.hpp"

namespace bs = blendsplat;

namespace {

bs::AnimGaussianCloud<float> row_tagged_cloud(std::size_t n) {
  bs::CloudShape shape;
  shape.expr_dim = 2;
  shape.feat_dim = 4;
  auto c = bs::make_cloud<float>(shape, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int a = 0; a < 3; ++a) {
      c.params.mu(i, a) = float(i) + 0.1f * float(a);
      c.params.log_scale(i, a) = std::log(0.001f);
    }
    for (float& v : c.params.feat_bias.row(i)) v = float(i);
  }
  c.scene_extent = 1.0f;
  return c;
}

bs::DensifyStats<float> stats_for(std::size_t n, float alpha, double grad) {
  bs::DensifyStats<float> s;
  s.reset(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.max_alpha[i] = alpha;
    s.grad_sum[i] = grad;
    s.count[i] = 1;
  }
  return s;
}

bs::SynthOptions toy_options() {
  bs::SynthOptions o;
  o.n_gaussians = 60;
  o.n_frames = 6;
  o.n_test = 2;
  o.resolution = 32;
  o.expr_dim = 8;
  o.feat_dim = 8;
  o.sh_degree = 1;
  return o;
}

bs::AnimGaussianCloud<float> toy_student(int expr_dim, std::size_t n = 120) {
  bs::InitOptions io;
  io.shape.expr_dim = expr_dim;
  io.shape.feat_dim = 8;
  io.shape.sh_degree = 1;
  io.sample_count = n;
  io.bounds = std::array<Eigen::Vector3d, 2>{Eigen::Vector3d(-0.8, -0.8, -0.8), Eigen::Vector3d(0.8, 0.8, 0.8)};
  io.seed = 11;
  return bs::init_cloud<float>({}, io);
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  auto c = row_tagged_cloud(5);
  const auto before = c.params;
  bs::Adam<float> adam(c.params);
  const auto grads = c.params.zeros_like();
  bs::TrainConfig cfg;
  adam.update(c.params, grads, bs::learning_rates(cfg, 0));
  EXPECT_TRUE(c.params == before);
  EXPECT_EQ(adam.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto c = row_tagged_cloud(3);
  const float mu0 = c.params.mu(1, 0);
  bs::Adam<float> adam(c.params);
  auto grads = c.params.zeros_like();
  grads.mu(1, 0) = 123.0f;
  bs::LearningRates lr;
  lr.mu = 0.01;
  adam.update(c.params, grads, lr);
  EXPECT_NEAR(c.params.mu(1, 0), mu0 - 0.01f, 1e-6f);
}

TEST(Adam, MinimizesQuadratic) {
  bs::ParamSet<double> p;
  p.mu.resize(1, 3);
  p.mu.data = {3.0, -2.0, 0.5};
  p.rot.resize(1, 4);
  p.rot(0, 0) = 1;
  bs::Adam<double> adam(p);
  bs::LearningRates lr;
  lr.mu = 0.05;
  for (int t = 0; t < 2000; ++t) {
    auto g = p.zeros_like();
    for (int a = 0; a < 3; ++a) g.mu.data[a] = 2.0 * (p.mu.data[a] - 1.0);
    adam.update(p, g, lr);
  }
  for (double v : p.mu.data) EXPECT_NEAR(v, 1.0, 1e-2);
}

TEST(Adam, RenormalizesQuaternions) {
  auto c = row_tagged_cloud(2);
  c.params.rot(0, 0) = 2.0f;
  bs::Adam<float> adam(c.params);
  adam.update(c.params, c.params.zeros_like(), bs::LearningRates{});
  EXPECT_FLOAT_EQ(c.params.rot(0, 0), 1.0f);
}

TEST(LearningRates, StartAtConfiguredValuesAndDecay) {
  bs::TrainConfig cfg;
  const auto lr0 = bs::learning_rates(cfg, 0);
  EXPECT_EQ(lr0.mu, cfg.lr_mu);
  EXPECT_EQ(lr0.mlp, cfg.lr_mlp);
  EXPECT_EQ(lr0.feat, cfg.lr_feat);
  EXPECT_EQ(lr0.scale, cfg.lr_scale);
  EXPECT_EQ(lr0.rot, cfg.lr_rot);
  const auto lr_end = bs::learning_rates(cfg, cfg.iters);
  EXPECT_NEAR(lr_end.mu, cfg.lr_mu * cfg.lr_final_fraction, 1e-15);
  EXPECT_EQ(lr_end.feat, cfg.lr_feat);
  EXPECT_LT(bs::learning_rates(cfg, 100).mu, lr0.mu);
}

TEST(Densify, PruneRemovesExactlyTheTransparentRows) {
  auto c = row_tagged_cloud(6);
  auto s = stats_for(6, 0.5f, 0.0);
  s.max_alpha[1] = 0.004f;
  s.max_alpha[4] = 0.0f;
  s.max_alpha[5] = 0.005f;  // at the threshold: kept
  bs::Adam<float> adam(c.params);
  for (std::size_t i = 0; i < 6; ++i) adam.m.mu(i, 0) = float(i);
  std::mt19937_64 rng(1);
  const auto rep = bs::densify_and_prune(c, &adam, s, bs::DensifyConfig{}, rng);
  EXPECT_EQ(rep.pruned, 2u);
  ASSERT_EQ(c.size(), 4u);
  const std::vector<float> want{0, 2, 3, 5};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(c.params.mu(i, 0), want[i]);
    EXPECT_EQ(c.params.feat_bias(i, 0), want[i]);
    EXPECT_EQ(adam.m.mu(i, 0), want[i]);
  }
  EXPECT_EQ(adam.rows(), 4u);
  EXPECT_EQ(s.size(), 4u);
}

TEST(Densify, ClonePreservesScaleBitwise) {
  auto c = row_tagged_cloud(3);
  auto s = stats_for(3, 0.5f, 0.0);
  s.grad_sum[1] = 1e-3;  // above tau_pos; scale 0.001 <= 0.01 * extent
  bs::Adam<float> adam(c.params);
  adam.m.mu(1, 0) = 7.0f;
  std::mt19937_64 rng(1);
  const auto rep = bs::densify_and_prune(c, &adam, s, bs::DensifyConfig{}, rng);
  EXPECT_EQ(rep.cloned, 1u);
  EXPECT_EQ(rep.split, 0u);
  ASSERT_EQ(c.size(), 4u);
  for (int a = 0; a < 3; ++a) {
    EXPECT_EQ(std::exp(c.params.log_scale(3, a)), std::exp(c.params.log_scale(1, a)));
    EXPECT_EQ(c.params.mu(3, a), c.params.mu(1, a));
  }
  EXPECT_EQ(c.params.feat_bias.row(3)[0], 1.0f);
  EXPECT_EQ(adam.m.mu(1, 0), 7.0f);
  EXPECT_EQ(adam.m.mu(3, 0), 0.0f);
}

TEST(Densify, SplitDividesScaleByFactor) {
  auto c = row_tagged_cloud(3);
  for (int a = 0; a < 3; ++a) c.params.log_scale(2, a) = std::log(0.05f * float(a + 1));
  auto s = stats_for(3, 0.5f, 0.0);
  s.grad_sum[2] = 1e-3;
  const auto parent = c.params.log_scale;
  bs::Adam<float> adam(c.params);
  std::mt19937_64 rng(1);
  const auto rep = bs::densify_and_prune(c, &adam, s, bs::DensifyConfig{}, rng);
  EXPECT_EQ(rep.split, 1u);
  ASSERT_EQ(c.size(), 4u);  // two originals, two children
  for (std::size_t child : {2u, 3u}) {
    for (int a = 0; a < 3; ++a) {
      const float want = std::exp(parent(2, a)) / 1.6f;
      const float got = std::exp(c.params.log_scale(child, a));
      EXPECT_LE(std::abs(got - want), std::abs(std::nextafter(want, 1.0f) - want)) << child << "/" << a;
    }
    EXPECT_EQ(c.params.feat_bias(child, 0), 2.0f);
  }
  EXPECT_NE(c.params.mu(2, 0), c.params.mu(3, 0));
  EXPECT_EQ(adam.rows(), 4u);
}

TEST(Densify, AllPrunedThrows) {
  auto c = row_tagged_cloud(2);
  auto s = stats_for(2, 0.0f, 0.0);
  std::mt19937_64 rng(1);
  EXPECT_THROW(bs::densify_and_prune(c, static_cast<bs::Adam<float>*>(nullptr), s, bs::DensifyConfig{}, rng), bs::NumericError);
}

TEST(Train, ZeroIterationsReturnsInitialCloud) {
  const auto scene = bs::synth_scene(toy_options());
  const auto ds = bs::to_dataset(scene);
  const auto student = toy_student(8);
  bs::TrainConfig cfg;
  cfg.iters = 0;
  const auto r = bs::train(ds, student, cfg);
  EXPECT_TRUE(r.cloud.params == student.params);
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, ExpressionDimensionMismatchThrows) {
  const auto ds = bs::to_dataset(bs::synth_scene(toy_options()));
  bs::TrainConfig cfg;
  cfg.iters = 1;
  EXPECT_THROW(bs::train(ds, toy_student(5), cfg), bs::ConfigError);
}

TEST(Train, ReducesLossAndRecordsRanges) {
  const auto ds = bs::to_dataset(bs::synth_scene(toy_options()));
  bs::TrainConfig cfg;
  cfg.iters = 150;
  cfg.densify_start = 50;
  cfg.densify_interval = 50;
  cfg.log_every = 1;
  cfg.seed = 2;
  const auto r = bs::train(ds, toy_student(8), cfg);
  ASSERT_EQ(r.log.size(), 150u);
  double first = 0, last = 0;
  for (int k = 0; k < 20; ++k) {
    first += r.log[k].loss;
    last += r.log[r.log.size() - 1 - k].loss;
  }
  EXPECT_LT(last, first);
  EXPECT_EQ(r.densify.size(), 3u);
  ASSERT_EQ(r.cloud.expr_min.size(), 8u);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_LE(r.cloud.expr_min[k], r.cloud.expr_max[k]);
  EXPECT_GT(r.cloud.scene_extent, 0.0f);
  for (std::size_t k = 1; k < r.log.size(); ++k) EXPECT_LE(r.log[k].lr_mu, r.log[k - 1].lr_mu);
}

TEST(Train, SameSeedGivesIdenticalCheckpoint) {
  const auto ds = bs::to_dataset(bs::synth_scene(toy_options()));
  bs::TrainConfig cfg;
  cfg.iters = 60;
  cfg.densify_start = 20;
  cfg.densify_interval = 20;
  cfg.seed = 5;
  const auto a = bs::train(ds, toy_student(8), cfg);
  const auto b = bs::train(ds, toy_student(8), cfg);
  EXPECT_EQ(bs::encode_checkpoint(a.cloud, &a.optimizer), bs::encode_checkpoint(b.cloud, &b.optimizer));
}

TEST(Train, NonFiniteLossAborts) {
  const auto ds = bs::to_dataset(bs::synth_scene(toy_options()));
  bs::TrainConfig cfg;
  cfg.iters = 3;
  cfg.lambda_p = 0.1;
  cfg.perceptual_start = 0;
  bs::TrainHooks hooks;
  hooks.perceptual = [](const bs::Image<float>&, const bs::Image<float>&, bs::Image<float>*, float) {
    return std::numeric_limits<float>::quiet_NaN();
  };
  EXPECT_THROW(bs::train(ds, toy_student(8), cfg, hooks), bs::NumericError);
}
