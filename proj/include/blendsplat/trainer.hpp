// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blendsplat/backends.hpp"
#include "blendsplat/cloud.hpp"
#include "blendsplat/config.hpp"
#include "blendsplat/dataset.hpp"
#include "blendsplat/densify.hpp"
#include "blendsplat/losses.hpp"
#include "blendsplat/optimizer.hpp"
#include "blendsplat/parallel.hpp"
#include "blendsplat/rasterizer.hpp"

namespace blendsplat {

struct TrainLogEntry {
  int iter = 0;
  double loss = 0;
  double psnr_train = 0;
  std::size_t n = 0;
  double lr_mu = 0;
  std::size_t frame = 0;
};

inline void to_json(nlohmann::json& j, const TrainLogEntry& e) {
  j = nlohmann::json{{"iter", e.iter}, {"loss", e.loss}, {"psnr_train", e.psnr_train}, {"N", e.n}, {"lr_mu", e.lr_mu}};
}

struct TrainHooks {
  std::function<void(const TrainLogEntry&)> on_log;
  std::function<void(int iter, const DensifyReport&)> on_densify;
  PerceptualFn<float> perceptual = unavailable_perceptual<float>();
};

struct TrainResult {
  AnimGaussianCloud<float> cloud;
  Adam<float> optimizer;
  std::vector<TrainLogEntry> log;
  std::vector<DensifyReport> densify;
};

/// Radius of the training-camera bounding sphere (1.1 x the largest camera
/// distance from the mean camera center).
inline double camera_extent(const Dataset& ds, std::span<const std::size_t> frames) {
  if (frames.empty()) return 1.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (std::size_t i : frames) mean += ds.frames[i].camera.center();
  mean /= double(frames.size());
  double r = 0;
  for (std::size_t i : frames) r = std::max(r, (ds.frames[i].camera.center() - mean).norm());
  return 1.1 * std::max(r, 1e-3);
}

/// Per-dimension min/max of the expression vectors of `frames`.
inline void expression_ranges(const Dataset& ds, std::span<const std::size_t> frames, std::vector<float>& lo,
                              std::vector<float>& hi) {
  const std::size_t b = std::size_t(ds.expr_dim());
  lo.assign(b, std::numeric_limits<float>::infinity());
  hi.assign(b, -std::numeric_limits<float>::infinity());
  for (std::size_t i : frames) {
    for (std::size_t k = 0; k < b; ++k) {
      lo[k] = std::min(lo[k], ds.frames[i].expr[k]);
      hi[k] = std::max(hi[k], ds.frames[i].expr[k]);
    }
  }
}

struct StepOutput {
  double loss = 0;
  double psnr = 0;
};

/// Forward and backward of the total loss for one view. Fills `grads`
/// (zeroed first); `aux` and `alpha_out` receive the densification inputs.
template <class T>
StepOutput loss_and_gradients(const AnimGaussianCloud<T>& cloud, std::span<const T> expr, const Camera& camera,
                              const Image<T>& target, const LossWeights& wts, const std::array<double, 3>& background,
                              ParamSet<T>& grads, RenderAux<T>* aux = nullptr, Tensor<T>* alpha_out = nullptr,
                              bool with_perceptual = false,
                              const PerceptualFn<T>& perceptual = unavailable_perceptual<T>()) {
  const auto fp = resolve_frame(cloud, expr);
  RasterSettings rs;
  rs.background = background;
  auto out = rasterize_forward(fp, camera, rs);
  auto loss = loss_total(out.image, target, wts, &fp.delta_mu, with_perceptual, perceptual);
  auto g = rasterize_backward(fp, out.cache, loss.grad, &out.aux);
  if (!loss.grad_shift.empty()) g.delta_mu = std::move(loss.grad_shift);
  grads.set_zero();
  backward_frame(cloud, fp, g, grads);
  if (aux) *aux = std::move(out.aux);
  if (alpha_out) *alpha_out = fp.alpha;
  return {double(loss.total), psnr(out.image, target)};
}

/// Total loss only, for finite differences.
template <class T>
double loss_only(const AnimGaussianCloud<T>& cloud, std::span<const T> expr, const Camera& camera,
                 const Image<T>& target, const LossWeights& wts, const std::array<double, 3>& background) {
  const auto fp = resolve_frame(cloud, expr);
  RasterSettings rs;
  rs.background = background;
  const auto out = rasterize_forward(fp, camera, rs);
  return double(loss_total(out.image, target, wts, &fp.delta_mu).total);
}

inline LossWeights loss_weights(const TrainConfig& cfg) {
  return {cfg.lambda_1, cfg.lambda_ssim, cfg.lambda_p, cfg.lambda_mu};
}

/// One training step's gradients on a dataset frame.
inline StepOutput frame_gradients(const AnimGaussianCloud<float>& cloud, const ExpressionFrame& frame,
                                  const TrainConfig& cfg, int iter, ParamSet<float>& grads, RenderAux<float>& aux,
                                  Tensor<float>* alpha_out, const PerceptualFn<float>& perceptual) {
  return loss_and_gradients(cloud, std::span<const float>(frame.expr), frame.camera, frame.image, loss_weights(cfg),
                            cfg.background, grads, &aux, alpha_out, iter >= cfg.perceptual_start, perceptual);
}

/// Optimizes `cloud` on the training split of `ds`.
inline TrainResult train(const Dataset& ds, AnimGaussianCloud<float> cloud, const TrainConfig& cfg,
                         const TrainHooks& hooks = {}) {
  cfg.validate();
  if (ds.frames.empty()) throw ConfigError("train: dataset has no frames");
  if (ds.expr_dim() != cloud.expr_dim) {
    throw ConfigError("train: dataset expr_dim " + std::to_string(ds.expr_dim()) + " does not match cloud expr_dim " +
                      std::to_string(cloud.expr_dim));
  }
  cloud.validate();
  if (cfg.threads > 0) set_num_threads(cfg.threads);
  std::vector<std::size_t> train_ids = ds.manifest.train;
  if (train_ids.empty()) {
    for (std::size_t i = 0; i < ds.frames.size(); ++i) train_ids.push_back(i);
  }
  cloud.scene_extent = float(camera_extent(ds, train_ids));
  expression_ranges(ds, train_ids, cloud.expr_min, cloud.expr_max);

  TrainResult res;
  res.optimizer = Adam<float>(cloud.params);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, train_ids.size() - 1);
  DensifyStats<float> stats;
  stats.reset(cloud.size());
  const auto dcfg = DensifyConfig::from(cfg);
  ParamSet<float> grads = cloud.params.zeros_like();
  RenderAux<float> aux;
  Tensor<float> alpha;

  for (int iter = 1; iter <= cfg.iters; ++iter) {
    const std::size_t fid = train_ids[pick(rng)];
    const auto& frame = ds.frames[fid];
    if (grads.mu.rows != cloud.size()) grads = cloud.params.zeros_like();
    const StepOutput so = frame_gradients(cloud, frame, cfg, iter, grads, aux, &alpha, hooks.perceptual);
    if (!std::isfinite(so.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at iteration " << iter << " (frame " << fid << ", N=" << cloud.size()
          << ", lr_mu=" << learning_rates(cfg, iter - 1).mu << ")";
      throw NumericError(msg.str());
    }
    if (iter <= cfg.densify_stop) stats.add_frame(aux, alpha);
    const auto lr = learning_rates(cfg, iter - 1);
    res.optimizer.update(cloud.params, grads, lr);
    // Diverged Gaussians are culled by the rasterizer, so the loss alone can stay finite.
    cloud.params.for_each([&](const std::string& name, const Tensor<float>& t, ParamGroup, bool) {
      for (float v : t.data) {
        if (!std::isfinite(v)) {
          throw NumericError("non-finite parameter " + name + " after iteration " + std::to_string(iter) +
                             " (N=" + std::to_string(cloud.size()) + ")");
        }
      }
    });

    if (cfg.log_every > 0 && (iter % cfg.log_every == 0 || iter == cfg.iters)) {
      TrainLogEntry e{iter, so.loss, so.psnr, cloud.size(), lr.mu, fid};
      res.log.push_back(e);
      if (hooks.on_log) hooks.on_log(e);
    }
    if (iter >= cfg.densify_start && iter <= cfg.densify_stop && iter % cfg.densify_interval == 0) {
      const auto rep = densify_and_prune(cloud, &res.optimizer, stats, dcfg, rng);
      res.densify.push_back(rep);
      if (hooks.on_densify) hooks.on_densify(iter, rep);
    }
  }
  res.cloud = std::move(cloud);
  return res;
}

}  // namespace blendsplat
