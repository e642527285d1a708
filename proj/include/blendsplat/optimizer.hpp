// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "blendsplat/cloud.hpp"
#include "blendsplat/config.hpp"

namespace blendsplat {

struct LearningRates {
  double mu = 0, rot = 0, scale = 0, feat = 0, mlp = 0, color = 0, opacity = 0;

  double for_group(ParamGroup g) const {
    switch (g) {
      case ParamGroup::Position: return mu;
      case ParamGroup::Rotation: return rot;
      case ParamGroup::Scale: return scale;
      case ParamGroup::Feature: return feat;
      case ParamGroup::Mlp: return mlp;
      case ParamGroup::Color: return color;
      case ParamGroup::Opacity: return opacity;
    }
    return 0;
  }
};

/// Group learning rates at `iter`. Positions and the MLP decay exponentially
/// from their initial value to lr_final_fraction of it at cfg.iters.
inline LearningRates learning_rates(const TrainConfig& cfg, int iter) {
  const double t = cfg.iters > 0 ? std::clamp(double(iter) / double(cfg.iters), 0.0, 1.0) : 0.0;
  const double decay = std::pow(cfg.lr_final_fraction, t);
  LearningRates lr;
  lr.mu = cfg.lr_mu * decay;
  lr.mlp = cfg.lr_mlp * decay;
  lr.rot = cfg.lr_rot;
  lr.scale = cfg.lr_scale;
  lr.feat = cfg.lr_feat;
  lr.color = cfg.lr_color;
  lr.opacity = cfg.lr_opacity;
  return lr;
}

/// Applies a row gather to every per-Gaussian tensor of a parameter set.
template <class T>
void gather_rows(ParamSet<T>& p, std::span<const long> index) {
  p.for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool per) {
    if (per) t = gather_rows(t, index);
  });
}

template <class T>
void normalize_quaternions(Tensor<T>& rot) {
  for (std::size_t i = 0; i < rot.rows; ++i) {
    T* q = rot.row_ptr(i);
    const T n = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (n > T(0)) {
      for (int k = 0; k < 4; ++k) q[k] /= n;
    } else {
      q[0] = T(1);
      q[1] = q[2] = q[3] = T(0);
    }
  }
}

/// Adam with bias correction. Moments share the ParamSet layout, so any row
/// gather applied to the parameters can be applied to the moments as well.
template <class T>
struct Adam {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-15;

  ParamSet<T> m, v;
  std::int64_t step = 0;

  Adam() = default;
  explicit Adam(const ParamSet<T>& params) : m(params.zeros_like()), v(params.zeros_like()) {}

  std::size_t rows() const { return m.mu.rows; }

  void update(ParamSet<T>& params, const ParamSet<T>& grads, const LearningRates& lr) {
    ++step;
    const double bc1 = 1.0 - std::pow(kBeta1, double(step));
    const double bc2 = 1.0 - std::pow(kBeta2, double(step));
    std::vector<Tensor<T>*> pm, pv;
    std::vector<const Tensor<T>*> pg;
    m.for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool) { pm.push_back(&t); });
    v.for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool) { pv.push_back(&t); });
    grads.for_each([&](const std::string&, const Tensor<T>& t, ParamGroup, bool) { pg.push_back(&t); });
    std::size_t k = 0;
    params.for_each([&](const std::string& name, Tensor<T>& p, ParamGroup group, bool) {
      Tensor<T>& mt = *pm[k];
      Tensor<T>& vt = *pv[k];
      const Tensor<T>& g = *pg[k];
      ++k;
      if (p.data.size() != g.data.size() || p.data.size() != mt.data.size()) {
        throw ShapeError("adam: tensor " + name + " is not co-indexed with its gradient/moments");
      }
      const T b1 = T(kBeta1), b2 = T(kBeta2);
      const T step_size = T(lr.for_group(group) / bc1);
      const T inv_bc2 = T(1.0 / bc2);
      for (std::size_t i = 0; i < p.data.size(); ++i) {
        const T gi = g.data[i];
        mt.data[i] = b1 * mt.data[i] + (T(1) - b1) * gi;
        vt.data[i] = b2 * vt.data[i] + (T(1) - b2) * gi * gi;
        p.data[i] -= step_size * mt.data[i] / (std::sqrt(vt.data[i] * inv_bc2) + T(kEps));
      }
    });
    normalize_quaternions(params.rot);
  }

  /// Row gather of both moments; `-1` entries start from zero.
  void gather(std::span<const long> index) {
    gather_rows(m, index);
    gather_rows(v, index);
  }
};

}  // namespace blendsplat
