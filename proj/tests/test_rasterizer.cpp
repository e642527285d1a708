// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "blendsplat/oracle.hpp"
#include "blendsplat/rasterizer.hpp"
#include "test_util.hpp"

namespace bs = blendsplat;
namespace bt = blendsplat::testing;

namespace {

bs::FrameRenderParams<float> single_splat(float alpha, float sigma) {
  bs::FrameRenderParams<float> p;
  p.sh_degree = 0;
  p.mu.resize(1, 3);
  p.rot.resize(1, 4);
  p.rot(0, 0) = 1;
  p.log_scale.resize(1, 3, std::log(sigma));
  p.sh.resize(1, 3);
  // Raw DC that evaluates to pure red after the +0.5 offset.
  p.sh(0, 0) = 0.5f / 0.28209479f;
  p.sh(0, 1) = -0.5f / 0.28209479f;
  p.sh(0, 2) = -0.5f / 0.28209479f;
  p.alpha.resize(1, 1, alpha);
  return p;
}

double max_abs_diff(const bs::Image<float>& a, const bs::Image<double>& b) {
  double m = 0;
  for (std::size_t k = 0; k < a.pixels.size(); ++k) m = std::max(m, std::abs(double(a.pixels[k]) - b.pixels[k]));
  return m;
}

}  // namespace

TEST(Rasterize, EmptySceneIsBackground) {
  bs::FrameRenderParams<float> p;
  p.mu.resize(0, 3);
  p.rot.resize(0, 4);
  p.log_scale.resize(0, 3);
  p.sh.resize(0, 48);
  p.alpha.resize(0, 1);
  bs::RasterSettings rs;
  rs.background = {0.2, 0.4, 0.6};
  const auto out = bs::rasterize_forward(p, bt::front_camera(32, 24), rs);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x) {
      EXPECT_FLOAT_EQ(out.image.at(x, y)[0], 0.2f);
      EXPECT_FLOAT_EQ(out.image.at(x, y)[2], 0.6f);
    }
}

TEST(Rasterize, SingleOpaqueSplatIsRedAtCenter) {
  // Near-opaque red splat on a black background: the center pixel takes the
  // clamped 0.99 alpha.
  auto p = single_splat(1.0f, 0.01f);
  bs::RasterSettings rs;
  rs.background = {0, 0, 0};
  const auto cam = bt::front_camera(33, 33);
  const auto out = bs::rasterize_forward(p, cam, rs);
  const float* c = out.image.at(16, 16);
  EXPECT_NEAR(c[0], 0.99f, 1e-5f);
  EXPECT_NEAR(c[1], 0.0f, 1e-6f);
  EXPECT_NEAR(c[2], 0.0f, 1e-6f);
  EXPECT_FLOAT_EQ(out.image.at(0, 0)[0], 0.0f);
}

TEST(Rasterize, TwoSplatsCompositeNearOverFar) {
  bs::FrameRenderParams<float> p;
  p.sh_degree = 0;
  p.mu.resize(2, 3);
  p.mu(0, 2) = 0.5f;   // far
  p.mu(1, 2) = -0.5f;  // near
  p.rot.resize(2, 4);
  p.rot(0, 0) = p.rot(1, 0) = 1;
  p.log_scale.resize(2, 3, std::log(0.3f));
  p.sh.resize(2, 3);
  const float k = 0.5f / 0.28209479f;
  p.sh(0, 0) = -k, p.sh(0, 1) = k, p.sh(0, 2) = -k;  // green, far
  p.sh(1, 0) = k, p.sh(1, 1) = -k, p.sh(1, 2) = -k;  // red, near
  p.alpha.resize(2, 1, 0.5f);
  bs::RasterSettings rs;
  rs.background = {0, 0, 0};
  const auto out = bs::rasterize_forward(p, bt::front_camera(33, 33), rs);
  const float* c = out.image.at(16, 16);
  // Hand computation at the common center: red 0.5, green 0.5 * 0.5.
  EXPECT_NEAR(c[0], 0.5f, 2e-3f);
  EXPECT_NEAR(c[1], 0.25f, 2e-3f);
  EXPECT_GT(c[0], c[1]);
}

TEST(Rasterize, MatchesOracleOnRandomScenes) {
  std::mt19937_64 rng(42);
  for (int s = 0; s < 10; ++s) {
    const auto p = bt::random_frame<float>(rng, 40);
    const auto cam = bt::random_camera(rng, 48, 40);
    bs::RasterSettings rs;
    rs.background = {0.1, 0.5, 0.9};
    const auto fast = bs::rasterize_forward(p, cam, rs);
    const auto slow = bs::oracle::render(p, cam, rs.background);
    EXPECT_LE(max_abs_diff(fast.image, slow), 1e-4) << "scene " << s;
  }
}

TEST(Rasterize, WeightsPlusTransmittanceSumToOne) {
  std::mt19937_64 rng(5);
  const auto p = bt::random_frame<float>(rng, 60);
  const auto cam = bt::random_camera(rng, 40, 40);
  const auto out = bs::rasterize_forward(p, cam);
  std::vector<float> ones(p.size(), 1.0f);
  const auto w = bs::composite_scalar(out.cache, std::span<const float>(ones));
  for (std::size_t px = 0; px < w.size(); ++px) {
    EXPECT_NEAR(w[px] + out.aux.final_transmittance[px], 1.0f, 1e-5f);
    EXPECT_GE(out.aux.final_transmittance[px], 0.0f);
  }
}

TEST(Rasterize, OutputInRangeForUnitColors) {
  std::mt19937_64 rng(6);
  for (int s = 0; s < 5; ++s) {
    auto p = bt::random_frame<float>(rng, 80, 0);
    for (auto& v : p.sh.data) v = float(std::uniform_real_distribution<>(-1.7, 1.7)(rng));
    const auto out = bs::rasterize_forward(p, bt::random_camera(rng, 32, 32));
    for (float v : out.image.pixels) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f + 1e-5f);
    }
  }
}

TEST(Rasterize, TileSizeDoesNotChangeImage) {
  std::mt19937_64 rng(8);
  const auto p = bt::random_frame<float>(rng, 100);
  const auto cam = bt::random_camera(rng, 70, 50);
  bs::RasterSettings a, b;
  a.tile_size = 16;
  b.tile_size = 64;
  const auto ia = bs::rasterize_forward(p, cam, a).image, ib = bs::rasterize_forward(p, cam, b).image;
  EXPECT_EQ(ia, ib);
}

TEST(Rasterize, ElongatedSplatIsBinnedByItsEllipse) {
  auto p = single_splat(0.9f, 0.01f);
  p.log_scale(0, 0) = std::log(0.6f);  // long along x, thin along y
  const auto cam = bt::front_camera(128, 128);
  const auto cache = bs::prepare_raster(p, cam, bs::RasterSettings{});
  const auto& t = cache.splats[0].tiles;
  EXPECT_EQ(t[2] - t[0], 8);  // full width
  EXPECT_LE(t[3] - t[1], 2);  // the isotropic radius would cover every row
  EXPECT_LE(max_abs_diff(bs::rasterize_forward(p, cam).image, bs::oracle::render(p, cam, {1.0, 1.0, 1.0})), 1e-4);
}

TEST(Rasterize, InputPermutationDoesNotChangeImage) {
  std::mt19937_64 rng(9);
  const auto p = bt::random_frame<float>(rng, 50);
  const auto cam = bt::random_camera(rng, 40, 40);
  std::vector<long> perm(p.size());
  std::iota(perm.begin(), perm.end(), 0L);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto q = p;
  q.mu = bs::gather_rows(p.mu, perm);
  q.rot = bs::gather_rows(p.rot, perm);
  q.log_scale = bs::gather_rows(p.log_scale, perm);
  q.sh = bs::gather_rows(p.sh, perm);
  q.alpha = bs::gather_rows(p.alpha, perm);
  const auto ia = bs::rasterize_forward(p, cam).image, ib = bs::rasterize_forward(q, cam).image;
  for (std::size_t k = 0; k < ia.pixels.size(); ++k) EXPECT_NEAR(ia.pixels[k], ib.pixels[k], 1e-6f);
}

TEST(Rasterize, BehindCameraIsCulled) {
  auto p = single_splat(0.9f, 0.2f);
  p.mu(0, 2) = -5.0f;  // camera sits at z = -3 looking toward +z
  const auto out = bs::rasterize_forward(p, bt::front_camera(16, 16));
  EXPECT_FALSE(out.aux.visible[0]);
  for (float v : out.image.pixels) EXPECT_EQ(v, 1.0f);
}

TEST(Rasterize, ShapeMismatchedGradientThrows) {
  const auto p = single_splat(0.5f, 0.1f);
  const auto out = bs::rasterize_forward(p, bt::front_camera(16, 16));
  EXPECT_THROW(bs::rasterize_backward(p, out.cache, bs::Image<float>(15, 16)), bs::ShapeError);
}

TEST(RasterizeBackward, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(10);
  const auto p = bt::random_frame<float>(rng, 30);
  const auto out = bs::rasterize_forward(p, bt::random_camera(rng, 32, 32));
  const auto g = bs::rasterize_backward(p, out.cache, bs::Image<float>(32, 32));
  for (const auto* t : {&g.mu, &g.rot, &g.log_scale, &g.sh, &g.alpha})
    for (float v : t->data) EXPECT_EQ(v, 0.0f);
}

TEST(RasterizeBackward, FullyOccludedSplatGetsNoGradient) {
  // Three large opaque walls drive transmittance below the cutoff before the
  // small splat behind them is reached.
  bs::FrameRenderParams<float> p;
  p.sh_degree = 0;
  p.mu.resize(4, 3);
  p.rot.resize(4, 4);
  p.log_scale.resize(4, 3);
  p.sh.resize(4, 3);
  p.alpha.resize(4, 1, 1.0f);
  p.mu(0, 2) = 0.5f;
  for (int a = 0; a < 3; ++a) p.log_scale(0, a) = std::log(0.05f);
  for (int w = 1; w < 4; ++w) {
    p.mu(w, 2) = -1.0f + 0.1f * float(w);
    for (int a = 0; a < 3; ++a) p.log_scale(w, a) = std::log(3.0f);
  }
  for (int i = 0; i < 4; ++i) p.rot(i, 0) = 1;
  const auto cam = bt::front_camera(24, 24);
  const auto out = bs::rasterize_forward(p, cam);
  bs::Image<float> up(24, 24, 1.0f);
  const auto g = bs::rasterize_backward(p, out.cache, up);
  for (int a = 0; a < 3; ++a) EXPECT_EQ(g.mu(0, a), 0.0f);
  EXPECT_EQ(g.alpha(0, 0), 0.0f);
  for (float v : g.sh.row(0)) EXPECT_EQ(v, 0.0f);
  EXPECT_NE(g.alpha(1, 0), 0.0f);
}

TEST(RasterizeBackward, DeterministicAcrossRuns) {
  std::mt19937_64 rng(11);
  const auto p = bt::random_frame<float>(rng, 200);
  const auto cam = bt::random_camera(rng, 64, 64);
  bs::Image<float> up(64, 64);
  for (auto& v : up.pixels) v = float(std::normal_distribution<>(0, 1)(rng));
  const auto a = bs::rasterize_forward(p, cam), b = bs::rasterize_forward(p, cam);
  const auto ga = bs::rasterize_backward(p, a.cache, up), gb = bs::rasterize_backward(p, b.cache, up);
  EXPECT_EQ(ga.mu, gb.mu);
  EXPECT_EQ(ga.rot, gb.rot);
  EXPECT_EQ(ga.sh, gb.sh);
  EXPECT_EQ(ga.alpha, gb.alpha);
}

TEST(Projection, CenterMatchesPinholeAndCovarianceMatchesNumericJacobian) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 50; ++t) {
    const auto cam = bt::random_camera(rng, 64, 48);
    const bs::CameraView<double> view(cam);
    const Eigen::Vector3d mu(0.3 * n(rng), 0.3 * n(rng), 0.3 * n(rng));
    const bs::Vec4<double> q(n(rng), n(rng), n(rng), n(rng));
    const bs::Vec3<double> ls(std::log(0.1) + 0.3 * n(rng), std::log(0.1), std::log(0.05));
    const Eigen::Matrix3d cov = bs::compute_cov3d(q, ls);
    const auto pr = bs::project_gaussian<double>(mu, cov, view);
    ASSERT_TRUE(pr.has_value());
    auto pix = [&](const Eigen::Vector3d& x) {
      const Eigen::Vector3d c = cam.rotation() * x + cam.translation();
      return Eigen::Vector2d(cam.fx * c.x() / c.z() + cam.cx, cam.fy * c.y() / c.z() + cam.cy);
    };
    EXPECT_LT((pr->mean - pix(mu)).norm(), 1e-9);
    Eigen::Matrix<double, 2, 3> jac;
    for (int a = 0; a < 3; ++a) {
      Eigen::Vector3d h = Eigen::Vector3d::Zero();
      h[a] = 1e-6;
      jac.col(a) = (pix(mu + h) - pix(mu - h)) / 2e-6;
    }
    Eigen::Matrix2d want = jac * cov * jac.transpose();
    want.diagonal().array() += 0.3;
    EXPECT_LT((pr->cov2d - want).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, want.cwiseAbs().maxCoeff()));
    const Eigen::Matrix2d inv = want.inverse();
    EXPECT_NEAR(pr->conic[0], inv(0, 0), 1e-6 * std::abs(inv(0, 0)) + 1e-9);
    EXPECT_NEAR(pr->conic[1], inv(0, 1), 1e-6 * std::abs(inv(0, 0)) + 1e-9);
    EXPECT_NEAR(pr->conic[2], inv(1, 1), 1e-6 * std::abs(inv(1, 1)) + 1e-9);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(want);
    EXPECT_EQ(pr->radius, int(std::ceil(3.0 * std::sqrt(es.eigenvalues().maxCoeff()))));
  }
}

TEST(Projection, CullsOutsideDepthRangeAndGuardBand) {
  const auto cam = bt::front_camera(32, 32);
  const bs::CameraView<double> view(cam);
  const Eigen::Matrix3d cov = 0.01 * Eigen::Matrix3d::Identity();
  EXPECT_TRUE(bs::project_gaussian<double>(Eigen::Vector3d(0, 0, 0), cov, view).has_value());
  EXPECT_FALSE(bs::project_gaussian<double>(Eigen::Vector3d(0, 0, -2.995), cov, view).has_value());
  EXPECT_FALSE(bs::project_gaussian<double>(Eigen::Vector3d(0, 0, 200), cov, view).has_value());
  EXPECT_FALSE(bs::project_gaussian<double>(Eigen::Vector3d(5, 0, 0), cov, view).has_value());
}

TEST(Peel, ZeroFractionEqualsPlainRender) {
  std::mt19937_64 rng(13);
  const auto p = bt::random_frame<float>(rng, 40);
  const auto cam = bt::random_camera(rng, 32, 32);
  EXPECT_EQ(bs::peel_render(p, cam, 0.0), bs::rasterize_forward(p, cam).image);
}

TEST(Peel, FullFractionIsBackground) {
  std::mt19937_64 rng(14);
  const auto p = bt::random_frame<float>(rng, 40);
  const auto img = bs::peel_render(p, bt::random_camera(rng, 32, 32), 1.0);
  for (float v : img.pixels) EXPECT_EQ(v, 1.0f);
}

TEST(Peel, DropsNearestFirstAndMatchesOracle) {
  std::mt19937_64 rng(15);
  const auto p = bt::random_frame<float>(rng, 30);
  const auto cam = bt::random_camera(rng, 32, 32);
  const auto img = bs::peel_render(p, cam, 0.5);
  std::vector<std::pair<double, std::size_t>> d;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Eigen::Vector3d mu(p.mu(i, 0), p.mu(i, 1), p.mu(i, 2));
    d.emplace_back((cam.rotation() * mu + cam.translation()).z(), i);
  }
  std::sort(d.begin(), d.end());
  std::vector<std::uint8_t> keep(p.size(), 1);
  for (std::size_t k = 0; k < 15; ++k) keep[d[k].second] = 0;
  const auto want = bs::oracle::render(p, cam, {1, 1, 1}, keep);
  EXPECT_LE(max_abs_diff(img, want), 1e-4);
}

TEST(Peel, FractionOutOfRangeThrows) {
  const auto p = single_splat(0.5f, 0.1f);
  EXPECT_THROW(bs::peel_render(p, bt::front_camera(16, 16), 1.5), bs::ConfigError);
  EXPECT_THROW(bs::peel_render(p, bt::front_camera(16, 16), -0.1), bs::ConfigError);
}

TEST(OpacityDiff, SameExpressionIsZeroOtherwiseMatchesManualComposite) {
  std::mt19937_64 rng(16);
  std::normal_distribution<double> nd(0, 1);
  std::vector<Eigen::Vector3d> pts(40);
  for (auto& pt : pts) pt = 0.4 * Eigen::Vector3d(nd(rng), nd(rng), nd(rng));
  bs::InitOptions opt;
  opt.shape.expr_dim = 4;
  opt.shape.feat_dim = 8;
  auto c = bs::init_cloud<float>(pts, opt);
  for (auto& v : c.params.feat_basis.data) v = float(nd(rng));
  const std::vector<float> ei{0.1f, 0.9f, 0.0f, 0.3f}, ej{0.7f, 0.0f, 0.5f, 0.2f};
  const auto cam = bt::front_camera(32, 32);
  const auto same = bs::render_opacity_diff<float>(c, ei, ei, cam);
  for (float v : same.field) EXPECT_EQ(v, 0.0f);
  for (float v : same.image.pixels) EXPECT_EQ(v, 1.0f);
  const auto ab = bs::render_opacity_diff<float>(c, ei, ej, cam);
  double mass = 0;
  for (float v : ab.field) mass += std::abs(v);
  EXPECT_GT(mass, 0.0);
  const auto fi = bs::resolve_frame(c, ei), fj = bs::resolve_frame(c, ej);
  const auto cache = bs::prepare_raster(fj, cam, bs::RasterSettings{});
  std::vector<float> diff(c.size());
  for (std::size_t g = 0; g < diff.size(); ++g) diff[g] = fj.alpha(g, 0) - fi.alpha(g, 0);
  EXPECT_EQ(ab.field, bs::composite_scalar(cache, std::span<const float>(diff)));
}
