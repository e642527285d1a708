// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "blendsplat/backends.hpp"
#include "blendsplat/camera.hpp"
#include "blendsplat/cloud.hpp"
#include "blendsplat/dataset.hpp"
#include "blendsplat/image_io.hpp"
#include "blendsplat/oracle.hpp"

namespace blendsplat {

struct SynthOptions {
  std::uint64_t seed = 1;
  int expr_dim = 8;
  std::size_t n_gaussians = 500;
  int n_frames = 100;  // training frames
  int n_test = 20;     // held-out frames with unseen expression/camera pairs
  int resolution = 128;
  int feat_dim = ModelDefaults::kFeatDim;
  int sh_degree = ModelDefaults::kShDegree;
  std::array<double, 3> background{1.0, 1.0, 1.0};
};

struct SynthScene {
  AnimGaussianCloud<float> teacher;
  DatasetManifest manifest;
  std::vector<Image<float>> images;
  double alpha_varying_fraction = 0;  // Gaussians whose alpha range exceeds 0.3
};

inline constexpr double kSynthCameraDistance = 3.0;
inline constexpr double kSynthFovDeg = 30.0;
inline constexpr double kSynthMaxAzimuthDeg = 35.0;
inline constexpr double kSynthMaxElevationDeg = 12.0;
inline constexpr double kSynthAlphaSwing = 0.3;
inline constexpr double kSynthMinVaryingFraction = 0.2;

namespace detail {

inline Camera arc_camera(double azimuth_deg, double elevation_deg, int res) {
  const double az = azimuth_deg * std::numbers::pi / 180.0, el = elevation_deg * std::numbers::pi / 180.0;
  const Eigen::Vector3d eye(kSynthCameraDistance * std::sin(az) * std::cos(el), -kSynthCameraDistance * std::sin(el),
                            -kSynthCameraDistance * std::cos(az) * std::cos(el));
  return look_at(eye, Eigen::Vector3d::Zero(), Eigen::Vector3d(0, -1, 0), kSynthFovDeg, res, res);
}

/// Expression from a 2-D latent through a fixed random sigmoid map, so all
/// frames lie on a smooth low-dimensional manifold in [0, 1]^B.
struct ExpressionMap {
  Eigen::MatrixXd a;
  Eigen::VectorXd c;
  std::vector<float> operator()(double z1, double z2) const {
    std::vector<float> e(std::size_t(a.rows()));
    for (Eigen::Index k = 0; k < a.rows(); ++k) {
      const double s = a(k, 0) * z1 + a(k, 1) * z2 + c[k];
      e[std::size_t(k)] = float(1.0 / (1.0 + std::exp(-s)));
    }
    return e;
  }
};

inline std::vector<float> mean_std_rows(const std::vector<std::vector<float>>& v) {
  double m = 0, s = 0;
  for (const auto& r : v)
    for (float x : r) m += x;
  const double cnt = double(v.size() * v[0].size());
  m /= cnt;
  for (const auto& r : v)
    for (float x : r) s += (x - m) * (x - m);
  return {float(m), float(std::sqrt(s / cnt))};
}

}  // namespace detail

/// Teacher cloud plus oracle-rendered dataset. Deterministic for a seed.
inline SynthScene synth_scene(const SynthOptions& opt) {
  if (opt.expr_dim < 2) throw ConfigError("synth_scene: expr_dim must be at least 2");
  if (opt.n_gaussians < 10) throw ConfigError("synth_scene: need at least 10 Gaussians");
  if (opt.n_frames < 1 || opt.n_test < 0) throw ConfigError("synth_scene: bad frame counts");
  if (opt.resolution < 8) throw ConfigError("synth_scene: resolution must be at least 8");
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // Gaussians inside a head-sized ellipsoid.
  const Eigen::Vector3d radii(0.55, 0.7, 0.55);
  std::vector<Eigen::Vector3d> pts;
  while (pts.size() < opt.n_gaussians) {
    const Eigen::Vector3d u(2 * uni(rng) - 1, 2 * uni(rng) - 1, 2 * uni(rng) - 1);
    if (u.squaredNorm() <= 1.0) pts.push_back(u.cwiseProduct(radii));
  }
  CloudShape shape;
  shape.backend = BackendTag::FeatureBlend;
  shape.expr_dim = opt.expr_dim;
  shape.feat_dim = opt.feat_dim;
  shape.sh_degree = opt.sh_degree;
  InitOptions io;
  io.shape = shape;
  io.bounds = std::array<Eigen::Vector3d, 2>{Eigen::Vector3d(-0.8, -0.9, -0.8), Eigen::Vector3d(0.8, 0.9, 0.8)};
  io.seed = opt.seed ^ 0x5eedULL;
  SynthScene scene;
  auto& t = scene.teacher;
  t = init_cloud<float>(pts, io);
  auto& p = t.params;
  for (std::size_t i = 0; i < t.size(); ++i) {
    Vec4<double> q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    for (int a = 0; a < 4; ++a) p.rot(i, a) = float(q[a]);
    for (int a = 0; a < 3; ++a) p.log_scale(i, a) = float(std::log(0.05) + 0.35 * normal(rng));
  }
  for (auto& v : p.feat_basis.data) v = float(0.7 * normal(rng));
  for (auto& v : p.feat_bias.data) v = float(0.5 * normal(rng));

  detail::ExpressionMap emap;
  emap.a.resize(opt.expr_dim, 2);
  emap.c.resize(opt.expr_dim);
  for (int k = 0; k < opt.expr_dim; ++k) {
    emap.a(k, 0) = 2.0 * normal(rng);
    emap.a(k, 1) = 2.0 * normal(rng);
    emap.c[k] = 0.5 * normal(rng);
  }

  // Frames: training latents follow a smooth closed curve while cameras sweep
  // the arc; held-out frames pair random latents with random arc positions.
  struct FrameSpec {
    double z1, z2, az, el;
  };
  std::vector<FrameSpec> specs;
  for (int f = 0; f < opt.n_frames; ++f) {
    const double s = double(f) / double(opt.n_frames);
    specs.push_back({std::sin(2 * std::numbers::pi * s), std::sin(4 * std::numbers::pi * s + 0.7),
                     kSynthMaxAzimuthDeg * std::sin(2 * std::numbers::pi * 3 * s + 0.3),
                     kSynthMaxElevationDeg * std::sin(2 * std::numbers::pi * 2 * s)});
  }
  for (int f = 0; f < opt.n_test; ++f) {
    specs.push_back({2 * uni(rng) - 1, 2 * uni(rng) - 1, kSynthMaxAzimuthDeg * (2 * uni(rng) - 1),
                     kSynthMaxElevationDeg * (2 * uni(rng) - 1)});
  }
  std::vector<std::vector<float>> exprs;
  for (const auto& s : specs) exprs.push_back(emap(s.z1, s.z2));

  // Calibrate the output layer: SH columns to fixed spreads, the opacity
  // column until enough Gaussians change alpha noticeably with expression.
  const std::size_t shc = t.sh_coeffs();
  auto& w_out = p.mlp[p.mlp.size() - 2];
  auto& b_out = p.mlp.back();
  const auto raw_outputs = [&]() {
    std::vector<Tensor<float>> outs;
    for (std::size_t f = 0; f < exprs.size(); f += 4) {
      const Tensor<float> x = detail::build_mlp_input(t, std::span<const float>(exprs[f]));
      outs.push_back(mlp_forward_batch(detail::mlp_layers(t), x, t.leaky_slope));
    }
    return outs;
  };
  {
    const auto outs = raw_outputs();
    for (std::size_t k = 0; k <= shc; ++k) {
      std::vector<std::vector<float>> col(1);
      for (const auto& o : outs)
        for (std::size_t i = 0; i < o.rows; ++i) col[0].push_back(o(i, k));
      const auto ms = detail::mean_std_rows(col);
      const double target_std = k == shc ? 2.0 : (k < 3 ? 0.9 : 0.12);
      const double target_mean = k == shc ? 1.2 : 0.0;
      const double scale = target_std / std::max(double(ms[1]), 1e-6);
      for (std::size_t r = 0; r < w_out.rows; ++r) w_out(r, k) = float(w_out(r, k) * scale);
      b_out(0, k) = float((b_out(0, k) - ms[0]) * scale + target_mean);
    }
  }
  const auto varying_fraction = [&]() {
    std::vector<float> lo(t.size(), 1.0f), hi(t.size(), 0.0f);
    for (const auto& e : exprs) {
      const auto fp = resolve_frame(t, std::span<const float>(e));
      for (std::size_t i = 0; i < t.size(); ++i) {
        lo[i] = std::min(lo[i], fp.alpha(i, 0));
        hi[i] = std::max(hi[i], fp.alpha(i, 0));
      }
    }
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < t.size(); ++i) cnt += (hi[i] - lo[i]) > kSynthAlphaSwing;
    return double(cnt) / double(t.size());
  };
  scene.alpha_varying_fraction = varying_fraction();
  for (int attempt = 0; attempt < 20 && scene.alpha_varying_fraction < 1.5 * kSynthMinVaryingFraction; ++attempt) {
    for (std::size_t r = 0; r < w_out.rows; ++r) w_out(r, shc) *= 1.25f;
    scene.alpha_varying_fraction = varying_fraction();
  }
  if (scene.alpha_varying_fraction < kSynthMinVaryingFraction) {
    throw InitError("synth_scene: teacher opacity does not vary enough with expression");
  }

  auto& m = scene.manifest;
  m.expr_dim = opt.expr_dim;
  m.background = opt.background;
  scene.images.resize(specs.size());
  for (std::size_t f = 0; f < specs.size(); ++f) {
    FrameRecord rec;
    char name[32];
    std::snprintf(name, sizeof(name), "images/%05zu.png", f);
    rec.image_path = name;
    rec.expr = exprs[f];
    rec.camera = detail::arc_camera(specs[f].az, specs[f].el, opt.resolution);
    m.frames.push_back(rec);
    (f < std::size_t(opt.n_frames) ? m.train : m.test).push_back(f);
  }
  parallel_for(specs.size(), [&](std::size_t f) {
    const auto fp = resolve_frame(t, std::span<const float>(exprs[f]));
    scene.images[f] = quantized_copy(oracle::render(fp, m.frames[f].camera, opt.background).cast<float>(), 16);
  });
  return scene;
}

/// The scene as an in-memory dataset (identical to saving and reloading).
inline Dataset to_dataset(const SynthScene& s) {
  Dataset ds;
  ds.manifest = s.manifest;
  ds.frames.resize(s.images.size());
  for (std::size_t f = 0; f < s.images.size(); ++f) {
    ds.frames[f].image = s.images[f];
    ds.frames[f].expr = s.manifest.frames[f].expr;
    ds.frames[f].camera = s.manifest.frames[f].camera;
  }
  return ds;
}

}  // namespace blendsplat
