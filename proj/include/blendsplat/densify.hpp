// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "blendsplat/cloud.hpp"
#include "blendsplat/errors.hpp"
#include "blendsplat/geometry.hpp"
#include "blendsplat/optimizer.hpp"
#include "blendsplat/rasterizer.hpp"

namespace blendsplat {

inline constexpr double kSplitScaleDivisor = 1.6;

template <class T>
struct DensifyStats {
  std::vector<double> grad_sum;  // sum of NDC-scaled |dL/d mean2d| over visible frames
  std::vector<int> count;        // frames in which the Gaussian was visible
  std::vector<T> max_alpha;      // max resolved opacity over all frames in the window

  void reset(std::size_t n) {
    grad_sum.assign(n, 0.0);
    count.assign(n, 0);
    max_alpha.assign(n, T(0));
  }
  std::size_t size() const { return count.size(); }

  /// Folds one rendered frame into the window. `alpha` is the resolved
  /// opacity of every Gaussian in that frame.
  void add_frame(const RenderAux<T>& aux, const Tensor<T>& alpha) {
    if (aux.visible.size() != size() || alpha.rows != size()) throw ShapeError("DensifyStats: row count mismatch");
    for (std::size_t i = 0; i < size(); ++i) {
      max_alpha[i] = std::max(max_alpha[i], alpha(i, 0));
      if (!aux.visible[i]) continue;
      grad_sum[i] += double(aux.mean2d_grad_norm[i]);
      ++count[i];
    }
  }

  double average_grad(std::size_t i) const { return count[i] > 0 ? grad_sum[i] / count[i] : 0.0; }
};

struct DensifyConfig {
  double tau_alpha = 0.005;
  double tau_pos = 2e-4;
  double percent_dense = 0.01;

  static DensifyConfig from(const TrainConfig& c) { return {c.tau_alpha, c.tau_pos, c.percent_dense}; }
};

struct DensifyReport {
  std::size_t pruned = 0, cloned = 0, split = 0;
  std::size_t n_before = 0, n_after = 0;
};

/// Closest representable log-scale whose exp() is nearest to `target`.
template <class T>
T log_for_scale(T target) {
  T best = std::log(target);
  T best_err = std::abs(std::exp(best) - target);
  T lo = best, hi = best;
  for (int step = 0; step < 4; ++step) {
    lo = std::nextafter(lo, -std::numeric_limits<T>::infinity());
    hi = std::nextafter(hi, std::numeric_limits<T>::infinity());
    for (T c : {lo, hi}) {
      const T err = std::abs(std::exp(c) - target);
      if (err < best_err) {
        best = c;
        best_err = err;
      }
    }
  }
  return best;
}

/// Prunes near-transparent Gaussians and clones or splits high-gradient ones.
/// Output row order: surviving originals (in order), then clones, then split
/// children. Optimizer moments follow the same gather with zero rows for new
/// Gaussians; `stats` is reset to the new size.
template <class T, class Rng>
DensifyReport densify_and_prune(AnimGaussianCloud<T>& cloud, Adam<T>* adam, DensifyStats<T>& stats,
                                const DensifyConfig& cfg, Rng& rng) {
  const std::size_t n = cloud.size();
  if (stats.size() != n) throw ShapeError("densify: stats do not match the cloud");
  if (adam && adam->rows() != n) throw ShapeError("densify: optimizer state does not match the cloud");
  DensifyReport rep;
  rep.n_before = n;
  const T size_limit = T(cfg.percent_dense) * cloud.scene_extent;
  auto& p = cloud.params;

  std::vector<long> keep, clones, splits;
  for (std::size_t i = 0; i < n; ++i) {
    if (stats.max_alpha[i] < T(cfg.tau_alpha)) {
      ++rep.pruned;
      continue;
    }
    const bool grow = stats.average_grad(i) >= cfg.tau_pos;
    if (!grow) {
      keep.push_back(long(i));
      continue;
    }
    const T max_scale = std::exp(*std::max_element(p.log_scale.row(i).begin(), p.log_scale.row(i).end()));
    if (max_scale <= size_limit) {
      keep.push_back(long(i));
      clones.push_back(long(i));
    } else {
      splits.push_back(long(i));
    }
  }
  rep.cloned = clones.size();
  rep.split = splits.size();
  const std::size_t n_after = keep.size() + clones.size() + 2 * splits.size();
  if (n_after == 0) throw NumericError("densify_and_prune: every Gaussian would be pruned");

  std::vector<long> src(keep);
  src.insert(src.end(), clones.begin(), clones.end());
  for (long s : splits) {
    src.push_back(s);
    src.push_back(s);
  }
  std::vector<long> moment_src(n_after, -1);
  std::copy(keep.begin(), keep.end(), moment_src.begin());

  const Tensor<T> parent_mu = p.mu, parent_rot = p.rot, parent_ls = p.log_scale;
  cloud.gather(src);
  std::normal_distribution<double> normal(0.0, 1.0);
  const T divisor = T(kSplitScaleDivisor);
  for (std::size_t c = 0; c < 2 * splits.size(); ++c) {
    const std::size_t row = keep.size() + clones.size() + c;
    const std::size_t par = std::size_t(splits[c / 2]);
    const Vec4<T> q(parent_rot(par, 0), parent_rot(par, 1), parent_rot(par, 2), parent_rot(par, 3));
    const Mat3<T> r = quat_to_matrix(quat_normalized(q));
    Vec3<T> z;
    for (int a = 0; a < 3; ++a) z[a] = T(std::exp(double(parent_ls(par, a))) * normal(rng));
    const Vec3<T> offset = r * z;
    for (int a = 0; a < 3; ++a) {
      p.mu(row, a) = parent_mu(par, a) + offset[a];
      p.log_scale(row, a) = log_for_scale(std::exp(parent_ls(par, a)) / divisor);
    }
  }
  if (adam) adam->gather(moment_src);
  stats.reset(n_after);
  rep.n_after = n_after;
  cloud.validate();
  return rep;
}

}  // namespace blendsplat
