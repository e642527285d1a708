// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "blendsplat/cloud.hpp"
#include "blendsplat/geometry.hpp"
#include "blendsplat/mlp.hpp"
#include "blendsplat/parallel.hpp"

namespace blendsplat {

/// Per-frame appearance and effective geometry handed to the rasterizer,
/// plus what the backend needs to backpropagate.
template <class T>
struct FrameRenderParams {
  BackendTag backend = BackendTag::FeatureBlend;
  int sh_degree = 3;
  Tensor<T> mu;         // N x 3 effective centers
  Tensor<T> rot;        // N x 4 effective rotations (unnormalized allowed)
  Tensor<T> log_scale;  // N x 3
  Tensor<T> sh;         // N x C raw SH coefficients
  Tensor<T> alpha;      // N x 1 opacity in [0, 1]

  // Backpropagation cache.
  std::vector<T> expr;
  std::vector<T> blend_weights;  // ExplicitBlend
  MlpCache<T> mlp_cache;
  Tensor<T> delta_mu;  // N x 3, motion backends
  Tensor<T> rt;        // N x 4 raw predicted rotation, motion backends

  std::size_t size() const noexcept { return mu.rows; }
};

/// Gradients of the loss with respect to FrameRenderParams fields.
template <class T>
struct FrameGrads {
  Tensor<T> mu, rot, log_scale, sh, alpha;
  Tensor<T> delta_mu;  // direct gradient of regularizers on the predicted shift

  static FrameGrads zeros_for(const FrameRenderParams<T>& p) {
    FrameGrads g;
    g.mu = zeros_like(p.mu);
    g.rot = zeros_like(p.rot);
    g.log_scale = zeros_like(p.log_scale);
    g.sh = zeros_like(p.sh);
    g.alpha = zeros_like(p.alpha);
    g.delta_mu = zeros_like(p.delta_mu);
    return g;
  }
};

/// f = F^T e + f0 with F stored as B rows of f_dim.
template <class T>
void blend_features(std::span<const T> basis, std::span<const T> bias, std::span<const T> expr, std::span<T> out) {
  const std::size_t fdim = bias.size();
  if (basis.size() != expr.size() * fdim || out.size() != fdim) {
    throw ShapeError("blend_features: basis is " + std::to_string(basis.size()) + " values, expected " +
                     std::to_string(expr.size()) + " x " + std::to_string(fdim));
  }
  std::copy(bias.begin(), bias.end(), out.begin());
  for (std::size_t b = 0; b < expr.size(); ++b) {
    const T e = expr[b];
    const T* row = basis.data() + b * fdim;
    for (std::size_t j = 0; j < fdim; ++j) out[j] += row[j] * e;
  }
}

template <class T>
std::vector<T> blend_features(std::span<const T> basis, std::span<const T> bias, std::span<const T> expr) {
  std::vector<T> out(bias.size());
  blend_features(basis, bias, expr, std::span<T>(out));
  return out;
}

/// Normalized weights of the explicit-basis average. All-zero expressions
/// give zero weights; a near-zero sum with nonzero entries falls back to
/// uniform weights.
template <class T>
std::vector<T> explicit_blend_weights(std::span<const T> expr, bool* fell_back = nullptr) {
  constexpr double kEps = 1e-8;
  constexpr double kDegenerateSum = 1e-6;
  const T sum = std::accumulate(expr.begin(), expr.end(), T(0));
  const bool nonzero = std::any_of(expr.begin(), expr.end(), [](T v) { return v != T(0); });
  std::vector<T> w(expr.size());
  if (fell_back) *fell_back = false;
  if (nonzero && std::abs(double(sum)) < kDegenerateSum) {
    if (fell_back) *fell_back = true;
    std::fill(w.begin(), w.end(), T(1) / T(expr.size()));
    return w;
  }
  for (std::size_t b = 0; b < expr.size(); ++b) w[b] = expr[b] / (sum + T(kEps));
  return w;
}

namespace detail {

template <class T>
void check_expr(const AnimGaussianCloud<T>& cloud, std::span<const T> expr) {
  if (expr.size() != std::size_t(cloud.expr_dim)) {
    throw ShapeError("expression has " + std::to_string(expr.size()) + " weights, cloud expects " +
                     std::to_string(cloud.expr_dim));
  }
}

template <class T>
std::span<const Tensor<T>> mlp_layers(const AnimGaussianCloud<T>& c) {
  return {c.params.mlp.data(), c.params.mlp.size()};
}

/// MLP input rows: [condition; pe(mu)] where the condition is the blended
/// feature or, for ConditionOnly, the expression itself.
template <class T>
Tensor<T> build_mlp_input(const AnimGaussianCloud<T>& c, std::span<const T> expr) {
  const auto& p = c.params;
  const std::size_t n = c.size();
  const bool blend = backend_uses_features(c.backend);
  const std::size_t cond = blend ? std::size_t(c.feat_dim) : expr.size();
  const std::size_t pe = c.pe_dim();
  Tensor<T> x(n, cond + pe);
  parallel_for(
      n,
      [&](std::size_t i) {
        T* row = x.row_ptr(i);
        if (blend) {
          blend_features(p.feat_basis.row(i), p.feat_bias.row(i), expr, std::span<T>(row, cond));
        } else {
          std::copy(expr.begin(), expr.end(), row);
        }
        encode_position(p.mu.row(i), c.bounds_lo, c.bounds_hi, c.pe_octaves, std::span<T>(row + cond, pe));
      },
      256);
  return x;
}

}  // namespace detail

/// Resolves per-frame parameters for any backend.
template <class T>
FrameRenderParams<T> resolve_frame(const AnimGaussianCloud<T>& c, std::span<const T> expr) {
  detail::check_expr(c, expr);
  const auto& p = c.params;
  const std::size_t n = c.size();
  const std::size_t shc = c.sh_coeffs();
  FrameRenderParams<T> out;
  out.backend = c.backend;
  out.sh_degree = c.sh_degree;
  out.expr.assign(expr.begin(), expr.end());
  out.mu = p.mu;
  out.rot = p.rot;
  out.log_scale = p.log_scale;
  out.sh.resize(n, shc);
  out.alpha.resize(n, 1);

  if (c.backend == BackendTag::ExplicitBlend) {
    out.blend_weights = explicit_blend_weights(expr);
    const auto& w = out.blend_weights;
    parallel_for(
        n,
        [&](std::size_t i) {
          T* sh = out.sh.row_ptr(i);
          const T* cb = p.color_basis.row_ptr(i);
          const T* ab = p.alpha_basis.row_ptr(i);
          T logit_sum = T(0);
          for (std::size_t b = 0; b < w.size(); ++b) {
            for (std::size_t k = 0; k < shc; ++k) sh[k] += w[b] * cb[b * shc + k];
            logit_sum += w[b] * ab[b];
          }
          out.alpha(i, 0) = sigmoid(logit_sum);
        },
        256);
    return out;
  }

  const Tensor<T> x = detail::build_mlp_input(c, expr);
  const Tensor<T> y = mlp_forward_batch(detail::mlp_layers(c), x, c.leaky_slope, &out.mlp_cache);

  if (backend_predicts_appearance(c.backend)) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(y.row_ptr(i), shc, out.sh.row_ptr(i));
      out.alpha(i, 0) = sigmoid(y(i, shc));
    }
  } else {
    out.sh = p.sh_static;
    for (std::size_t i = 0; i < n; ++i) out.alpha(i, 0) = sigmoid(p.opacity_static(i, 0));
  }
  if (backend_predicts_motion(c.backend)) {
    const std::size_t off = c.backend == BackendTag::ChangeAll ? shc + 1 : 0;
    out.delta_mu.resize(n, 3);
    out.rt.resize(n, 4);
    for (std::size_t i = 0; i < n; ++i) {
      const T* yr = y.row_ptr(i) + off;
      for (int a = 0; a < 3; ++a) {
        out.delta_mu(i, a) = yr[a];
        out.mu(i, a) = p.mu(i, a) + yr[a];
      }
      const Vec4<T> rt(yr[3], yr[4], yr[5], yr[6]);
      for (int a = 0; a < 4; ++a) out.rt(i, a) = rt[a];
      // R' = R_t R; the stored rotation is normalized downstream.
      const Vec4<T> q(p.rot(i, 0), p.rot(i, 1), p.rot(i, 2), p.rot(i, 3));
      const Vec4<T> composed = quat_mul(quat_normalized(rt), q);
      for (int a = 0; a < 4; ++a) out.rot(i, a) = composed[a];
    }
  }
  return out;
}

template <class T>
FrameRenderParams<T> resolve_frame(const AnimGaussianCloud<T>& c, const std::vector<T>& expr) {
  return resolve_frame(c, std::span<const T>(expr));
}

/// Accumulates parameter gradients into `grads` (same layout as the cloud).
template <class T>
void backward_frame(const AnimGaussianCloud<T>& c, const FrameRenderParams<T>& fp, const FrameGrads<T>& g,
                    ParamSet<T>& grads) {
  const auto& p = c.params;
  const std::size_t n = c.size();
  const std::size_t shc = c.sh_coeffs();
  const bool motion = backend_predicts_motion(c.backend);

  for (std::size_t k = 0; k < g.log_scale.data.size(); ++k) grads.log_scale.data[k] += g.log_scale.data[k];
  if (!motion) {
    for (std::size_t k = 0; k < g.mu.data.size(); ++k) grads.mu.data[k] += g.mu.data[k];
    for (std::size_t k = 0; k < g.rot.data.size(); ++k) grads.rot.data[k] += g.rot.data[k];
  }

  if (c.backend == BackendTag::ExplicitBlend) {
    const auto& w = fp.blend_weights;
    parallel_for(
        n,
        [&](std::size_t i) {
          const T a = fp.alpha(i, 0);
          const T d_logit = g.alpha(i, 0) * a * (T(1) - a);
          T* dcb = grads.color_basis.row_ptr(i);
          T* dab = grads.alpha_basis.row_ptr(i);
          const T* dsh = g.sh.row_ptr(i);
          for (std::size_t b = 0; b < w.size(); ++b) {
            for (std::size_t k = 0; k < shc; ++k) dcb[b * shc + k] += w[b] * dsh[k];
            dab[b] += w[b] * d_logit;
          }
        },
        256);
    return;
  }

  const auto layers = detail::mlp_layers(c);
  const std::size_t out_w = layers[layers.size() - 2].cols;
  Tensor<T> d_out(n, out_w);
  if (backend_predicts_appearance(c.backend)) {
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(g.sh.row_ptr(i), shc, d_out.row_ptr(i));
      const T a = fp.alpha(i, 0);
      d_out(i, shc) = g.alpha(i, 0) * a * (T(1) - a);
    }
  } else {
    for (std::size_t k = 0; k < g.sh.data.size(); ++k) grads.sh_static.data[k] += g.sh.data[k];
    for (std::size_t i = 0; i < n; ++i) {
      const T a = fp.alpha(i, 0);
      grads.opacity_static(i, 0) += g.alpha(i, 0) * a * (T(1) - a);
    }
  }
  if (motion) {
    const std::size_t off = c.backend == BackendTag::ChangeAll ? shc + 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      T* dy = d_out.row_ptr(i) + off;
      for (int a = 0; a < 3; ++a) {
        const T dm = g.mu(i, a);
        grads.mu(i, a) += dm;
        dy[a] = dm + (g.delta_mu.empty() ? T(0) : g.delta_mu(i, a));
      }
      const Vec4<T> rt(fp.rt(i, 0), fp.rt(i, 1), fp.rt(i, 2), fp.rt(i, 3));
      const Vec4<T> q(p.rot(i, 0), p.rot(i, 1), p.rot(i, 2), p.rot(i, 3));
      const Vec4<T> dq_eff(g.rot(i, 0), g.rot(i, 1), g.rot(i, 2), g.rot(i, 3));
      const auto [d_rt_unit, d_q] = quat_mul_backward(quat_normalized(rt), q, dq_eff);
      const Vec4<T> d_rt = quat_normalize_backward(rt, d_rt_unit);
      for (int a = 0; a < 4; ++a) {
        dy[3 + a] = d_rt[a];
        grads.rot(i, a) += d_q[a];
      }
    }
  }

  Tensor<T> d_x;
  std::span<Tensor<T>> d_layers(grads.mlp.data(), grads.mlp.size());
  mlp_backward_batch(layers, fp.mlp_cache, d_out, c.leaky_slope, d_layers, &d_x);

  const bool blend = backend_uses_features(c.backend);
  const std::size_t cond = blend ? std::size_t(c.feat_dim) : fp.expr.size();
  const std::size_t pe = c.pe_dim();
  const std::size_t fdim = c.feat_dim;
  parallel_for(
      n,
      [&](std::size_t i) {
        const T* dx = d_x.row_ptr(i);
        if (blend) {
          T* dF = grads.feat_basis.row_ptr(i);
          T* df0 = grads.feat_bias.row_ptr(i);
          for (std::size_t j = 0; j < fdim; ++j) df0[j] += dx[j];
          for (std::size_t b = 0; b < fp.expr.size(); ++b) {
            const T e = fp.expr[b];
            for (std::size_t j = 0; j < fdim; ++j) dF[b * fdim + j] += e * dx[j];
          }
        }
        encode_position_backward(p.mu.row(i), c.bounds_lo, c.bounds_hi, c.pe_octaves,
                                 std::span<const T>(dx + cond, pe), grads.mu.row(i));
      },
      256);
}

}  // namespace blendsplat
