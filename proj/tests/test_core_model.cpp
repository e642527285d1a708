// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "blendsplat/camera.hpp"
#include "blendsplat/cloud.hpp"
#include "blendsplat/config.hpp"
#include "blendsplat/geometry.hpp"

namespace bs = blendsplat;

TEST(Cov3d, IdentityRotationUnitScale) {
  const auto s = bs::compute_cov3d(bs::quat_identity<double>(), bs::Vec3<double>::Zero().eval());
  EXPECT_TRUE(s.isApprox(Eigen::Matrix3d::Identity(), 1e-15));
}

TEST(Cov3d, QuarterTurnPermutesAxes) {
  const auto q = bs::quat_from_axis_angle<double>(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2);
  const auto s = bs::compute_cov3d(q, bs::Vec3<double>(std::log(2.0), 0, 0));
  EXPECT_LT((s - Eigen::Vector3d(1, 4, 1).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Cov3d, EigenvaluesAreSquaredScales) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 200; ++t) {
    const bs::Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
    const bs::Vec3<double> ls(n(rng), n(rng), n(rng));
    const Eigen::Matrix3d s = bs::compute_cov3d(q, ls);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s);
    std::array<double, 3> want{std::exp(2 * ls[0]), std::exp(2 * ls[1]), std::exp(2 * ls[2])};
    std::sort(want.begin(), want.end());
    for (int k = 0; k < 3; ++k) EXPECT_NEAR(es.eigenvalues()[k] / want[k], 1.0, 1e-5);
  }
}

TEST(Cov3d, SymmetricAndPsdForRandomInputs) {
  std::mt19937_64 rng(12);
  std::normal_distribution<float> n(0, 1);
  for (int t = 0; t < 1000; ++t) {
    const bs::Vec4<float> q(n(rng), n(rng), n(rng), n(rng));
    const bs::Vec3<float> ls(n(rng), n(rng), n(rng));
    const bs::Mat3<float> s = bs::compute_cov3d(q, ls);
    EXPECT_LE((s - s.transpose()).cwiseAbs().maxCoeff(), 1e-7f);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(s.cast<double>());
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-7 * std::max(1.0, es.eigenvalues().maxCoeff()));
  }
}

TEST(Quaternion, ComposeQuarterTurnTwiceIsHalfTurn) {
  const auto q = bs::quat_from_axis_angle<double>(Eigen::Vector3d::UnitZ(), std::numbers::pi / 2);
  const auto r = bs::quat_to_matrix(bs::quat_mul(q, q));
  Eigen::Matrix3d half;
  half << -1, 0, 0, 0, -1, 0, 0, 0, 1;
  EXPECT_LT((r - half).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Quaternion, MatchesEigen) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 50; ++t) {
    bs::Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    const Eigen::Quaterniond e(q[0], q[1], q[2], q[3]);
    EXPECT_LT((bs::quat_to_matrix(q) - e.toRotationMatrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(InitCloud, SampledDefaultShapes) {
  bs::InitOptions opt;
  opt.bounds = std::array<Eigen::Vector3d, 2>{Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1)};
  const auto c = bs::init_cloud<float>({}, opt);
  EXPECT_EQ(c.size(), 2500u);
  EXPECT_EQ(c.expr_dim, 52);
  EXPECT_EQ(c.feat_dim, 32);
  EXPECT_EQ(c.params.feat_basis.rows, 2500u);
  EXPECT_EQ(c.params.feat_basis.cols, 52u * 32u);
  EXPECT_TRUE(std::all_of(c.params.feat_basis.data.begin(), c.params.feat_basis.data.end(),
                          [](float v) { return v == 0.0f; }));
  // Bias ~ N(0, 0.01^2).
  double m = 0, s = 0;
  for (float v : c.params.feat_bias.data) m += v;
  m /= double(c.params.feat_bias.data.size());
  for (float v : c.params.feat_bias.data) s += (v - m) * (v - m);
  s = std::sqrt(s / double(c.params.feat_bias.data.size()));
  EXPECT_NEAR(m, 0.0, 1e-3);
  EXPECT_NEAR(s, 0.01, 1e-3);
}

TEST(InitCloud, SinglePointAtOrigin) {
  bs::InitOptions opt;
  opt.shape.expr_dim = 4;
  const auto c = bs::init_cloud<float>({Eigen::Vector3d::Zero()}, opt);
  ASSERT_EQ(c.size(), 1u);
  for (int a = 0; a < 3; ++a) EXPECT_EQ(c.params.mu(0, a), 0.0f);
  EXPECT_EQ(c.params.rot(0, 0), 1.0f);
  for (int a = 1; a < 4; ++a) EXPECT_EQ(c.params.rot(0, a), 0.0f);
  EXPECT_TRUE(std::isfinite(c.params.log_scale(0, 0)));
}

TEST(InitCloud, LogScaleIsMeanOfThreeNearest) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::vector<Eigen::Vector3d> pts(100);
  for (auto& p : pts) p = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
  bs::InitOptions opt;
  opt.shape.expr_dim = 4;
  const auto c = bs::init_cloud<double>(pts, opt);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j)
      if (j != i) d.push_back((pts[i] - pts[j]).norm());
    std::sort(d.begin(), d.end());
    const double want = std::log((d[0] + d[1] + d[2]) / 3.0);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(c.params.log_scale(i, a), want, 1e-9);
  }
}

TEST(InitCloud, NoPointsNoBoundsThrows) {
  EXPECT_THROW(bs::init_cloud<float>({}, bs::InitOptions{}), bs::InitError);
}

TEST(InitCloud, ExplicitBackendsGetTheirTensors) {
  bs::InitOptions opt;
  opt.shape.backend = bs::BackendTag::ExplicitBlend;
  opt.shape.expr_dim = 5;
  const auto c = bs::init_cloud<float>({Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()}, opt);
  EXPECT_EQ(c.params.color_basis.cols, 5u * 48u);
  EXPECT_EQ(c.params.alpha_basis.cols, 5u);
  EXPECT_TRUE(c.params.mlp.empty());
  EXPECT_EQ(c.params.feat_basis.cols, 0u);
}

TEST(Cloud, ValidateRejectsMismatchedColumns) {
  auto c = bs::make_cloud<float>(bs::CloudShape{}, 3);
  c.params.feat_bias.resize(2, 32);
  EXPECT_THROW(c.validate(), bs::ShapeError);
}

TEST(Camera, ValidateRejectsBadInputs) {
  auto cam = bs::look_at(Eigen::Vector3d(0, 0, -3), Eigen::Vector3d::Zero(), Eigen::Vector3d(0, -1, 0), 40, 64, 64);
  EXPECT_NO_THROW(cam.validate());
  auto small = cam;
  small.width = 4;
  EXPECT_THROW(small.validate(), bs::ConfigError);
  auto skew = cam;
  skew.world_to_cam(0, 1) += 0.1;
  EXPECT_THROW(skew.validate(), bs::ConfigError);
  auto near = cam;
  near.znear = 0;
  EXPECT_THROW(near.validate(), bs::ConfigError);
}

TEST(Camera, LookAtPutsTargetOnAxis) {
  const Eigen::Vector3d eye(1, 2, 3), target(-1, 0, 0.5);
  const auto cam = bs::look_at(eye, target, Eigen::Vector3d(0, -1, 0), 50, 80, 60);
  const Eigen::Vector3d t = cam.rotation() * target + cam.translation();
  EXPECT_NEAR(t.x(), 0, 1e-12);
  EXPECT_NEAR(t.y(), 0, 1e-12);
  EXPECT_NEAR(t.z(), (target - eye).norm(), 1e-12);
  EXPECT_TRUE(cam.center().isApprox(eye, 1e-12));
}

TEST(Config, DefaultsAudit) {
  const bs::TrainConfig c;
  EXPECT_EQ(c.lr_mlp, 1.6e-4);
  EXPECT_EQ(c.lr_mu, 1.6e-4);
  EXPECT_EQ(c.lr_feat, 0.0025);
  EXPECT_EQ(c.lr_scale, 0.005);
  EXPECT_EQ(c.lr_rot, 0.001);
  EXPECT_EQ(c.lambda_1, 0.8);
  EXPECT_EQ(c.lambda_ssim, 0.2);
  EXPECT_EQ(c.densify_start, 500);
  EXPECT_EQ(c.densify_stop, 15000);
  EXPECT_EQ(c.densify_interval, 100);
  EXPECT_EQ(c.tau_alpha, 0.005);
  EXPECT_EQ(c.tau_pos, 2e-4);
  EXPECT_EQ(c.percent_dense, 0.01);
  EXPECT_EQ(c.iters, 5000);
  EXPECT_EQ(bs::ModelDefaults::kFeatDim, 32);
  EXPECT_EQ(bs::ModelDefaults::kExprDim, 52);
  EXPECT_EQ(bs::ModelDefaults::kHidden, 64);
  EXPECT_EQ(bs::ModelDefaults::kShDegree, 3);
  EXPECT_EQ(bs::ModelDefaults::kInitPoints, 2500);
}

TEST(Config, JsonRoundTripAndValidation) {
  bs::TrainConfig c;
  c.iters = 123;
  c.seed = 9;
  nlohmann::json j = c;
  const auto back = j.get<bs::TrainConfig>();
  EXPECT_EQ(back.iters, 123);
  EXPECT_EQ(back.seed, 9u);
  EXPECT_THROW((nlohmann::json{{"lr_muu", 1.0}}.get<bs::TrainConfig>()), bs::ConfigError);
  EXPECT_THROW((nlohmann::json{{"lr_mu", -1.0}}.get<bs::TrainConfig>()), bs::ConfigError);
  EXPECT_THROW((nlohmann::json{{"densify_start", 20000}}.get<bs::TrainConfig>()), bs::ConfigError);
  EXPECT_THROW((nlohmann::json{{"lambda_1", -0.1}}.get<bs::TrainConfig>()), bs::ConfigError);
  EXPECT_THROW((nlohmann::json{{"iters", "many"}}.get<bs::TrainConfig>()), bs::ConfigError);
}
