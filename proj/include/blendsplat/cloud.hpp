// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "blendsplat/config.hpp"
#include "blendsplat/errors.hpp"
#include "blendsplat/geometry.hpp"
#include "blendsplat/parallel.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat {

/// Selects how per-frame appearance (and geometry) is derived from the
/// expression vector.
enum class BackendTag : std::uint32_t {
  FeatureBlend = 0,   // blended latent basis -> shared MLP -> (sh, alpha)
  ExplicitBlend = 1,  // weighted average of explicit color/opacity bases
  DeltaPose = 2,      // blended latent basis -> MLP -> (d_mu, r_t), static appearance
  ConditionOnly = 3,  // expression fed straight into a deeper MLP
  ChangeAll = 4,      // blended basis -> MLP -> (sh, alpha, d_mu, r_t)
};

inline const char* backend_name(BackendTag tag) {
  switch (tag) {
    case BackendTag::FeatureBlend: return "feature_blend";
    case BackendTag::ExplicitBlend: return "explicit_blend";
    case BackendTag::DeltaPose: return "delta_pose";
    case BackendTag::ConditionOnly: return "condition_only";
    case BackendTag::ChangeAll: return "change_all";
  }
  return "unknown";
}

inline BackendTag backend_from_name(const std::string& name) {
  for (auto tag : {BackendTag::FeatureBlend, BackendTag::ExplicitBlend, BackendTag::DeltaPose,
                   BackendTag::ConditionOnly, BackendTag::ChangeAll}) {
    if (name == backend_name(tag)) return tag;
  }
  throw ConfigError("unknown backend: " + name);
}

inline bool backend_uses_features(BackendTag t) {
  return t == BackendTag::FeatureBlend || t == BackendTag::DeltaPose || t == BackendTag::ChangeAll;
}
inline bool backend_uses_mlp(BackendTag t) { return t != BackendTag::ExplicitBlend; }
inline bool backend_predicts_appearance(BackendTag t) {
  return t == BackendTag::FeatureBlend || t == BackendTag::ConditionOnly || t == BackendTag::ChangeAll;
}
inline bool backend_predicts_motion(BackendTag t) {
  return t == BackendTag::DeltaPose || t == BackendTag::ChangeAll;
}

inline int sh_coeff_count(int degree) { return 3 * (degree + 1) * (degree + 1); }
inline int pe_width(int octaves) { return 3 + 6 * octaves; }

enum class ParamGroup { Position, Rotation, Scale, Feature, Mlp, Color, Opacity };

/// All trainable tensors. The same layout doubles as the gradient container
/// and as the optimizer moment storage, which keeps everything co-indexed.
template <class T>
struct ParamSet {
  // Per-Gaussian tensors, rows == N. Unused slots have zero columns.
  Tensor<T> mu;              // N x 3
  Tensor<T> rot;             // N x 4, quaternion (w, x, y, z)
  Tensor<T> log_scale;       // N x 3
  Tensor<T> feat_basis;      // N x (B * f_dim), row b of the basis at [b * f_dim, (b + 1) * f_dim)
  Tensor<T> feat_bias;       // N x f_dim
  Tensor<T> sh_static;       // N x C (DeltaPose)
  Tensor<T> opacity_static;  // N x 1, logit domain (DeltaPose)
  Tensor<T> color_basis;     // N x (B * C) (ExplicitBlend)
  Tensor<T> alpha_basis;     // N x B, logit domain (ExplicitBlend)
  // Shared MLP: [W0, b0, W1, b1, ...], W is (in x out), b is (1 x out).
  std::vector<Tensor<T>> mlp;

  static constexpr int kPerGaussianCount = 9;

  /// f(name, tensor, group, per_gaussian) for every tensor in a fixed order.
  template <class F>
  void for_each(F&& f) {
    f("mu", mu, ParamGroup::Position, true);
    f("rot", rot, ParamGroup::Rotation, true);
    f("log_scale", log_scale, ParamGroup::Scale, true);
    f("feat_basis", feat_basis, ParamGroup::Feature, true);
    f("feat_bias", feat_bias, ParamGroup::Feature, true);
    f("sh_static", sh_static, ParamGroup::Color, true);
    f("opacity_static", opacity_static, ParamGroup::Opacity, true);
    f("color_basis", color_basis, ParamGroup::Color, true);
    f("alpha_basis", alpha_basis, ParamGroup::Opacity, true);
    for (std::size_t i = 0; i < mlp.size(); ++i) {
      f((i % 2 == 0 ? "mlp." + std::to_string(i / 2) + ".weight" : "mlp." + std::to_string(i / 2) + ".bias"),
        mlp[i], ParamGroup::Mlp, false);
    }
  }
  template <class F>
  void for_each(F&& f) const {
    const_cast<ParamSet*>(this)->for_each([&](const std::string& name, Tensor<T>& t, ParamGroup g, bool per) {
      f(name, static_cast<const Tensor<T>&>(t), g, per);
    });
  }

  ParamSet zeros_like() const {
    ParamSet out;
    auto* self = const_cast<ParamSet*>(this);
    std::vector<Tensor<T>*> dst;
    out.mlp.resize(mlp.size());
    out.for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool) { dst.push_back(&t); });
    std::size_t i = 0;
    self->for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool) { *dst[i++] = Tensor<T>(t.rows, t.cols); });
    return out;
  }

  void set_zero() {
    for_each([](const std::string&, Tensor<T>& t, ParamGroup, bool) { t.set_zero(); });
  }

  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    out.mlp.resize(mlp.size());
    std::vector<Tensor<U>*> dst;
    out.for_each([&](const std::string&, Tensor<U>& t, ParamGroup, bool) { dst.push_back(&t); });
    std::size_t i = 0;
    for_each([&](const std::string&, const Tensor<T>& t, ParamGroup, bool) { *dst[i++] = t.template cast<U>(); });
    return out;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    bool eq = a.mlp.size() == b.mlp.size();
    if (!eq) return false;
    std::vector<const Tensor<T>*> other;
    b.for_each([&](const std::string&, const Tensor<T>& t, ParamGroup, bool) { other.push_back(&t); });
    std::size_t i = 0;
    a.for_each([&](const std::string&, const Tensor<T>& t, ParamGroup, bool) { eq = eq && (t == *other[i++]); });
    return eq;
  }
};

/// Static shape of a cloud; determines every tensor width.
struct CloudShape {
  BackendTag backend = BackendTag::FeatureBlend;
  int expr_dim = ModelDefaults::kExprDim;
  int feat_dim = ModelDefaults::kFeatDim;
  int sh_degree = ModelDefaults::kShDegree;
  int pe_octaves = ModelDefaults::kPeOctaves;
  int hidden = 0;  // 0 selects the backend default

  /// Layer widths including input and output.
  std::vector<int> mlp_widths() const {
    const int shc = sh_coeff_count(sh_degree);
    const int pe = pe_width(pe_octaves);
    switch (backend) {
      case BackendTag::FeatureBlend:
        return {feat_dim + pe, hidden ? hidden : ModelDefaults::kHidden, shc + 1};
      case BackendTag::DeltaPose:
        return {feat_dim + pe, hidden ? hidden : ModelDefaults::kHidden, 7};
      case BackendTag::ChangeAll:
        return {feat_dim + pe, hidden ? hidden : ModelDefaults::kHidden, shc + 1 + 7};
      case BackendTag::ConditionOnly: {
        const int h = hidden ? hidden : ModelDefaults::kConditionHidden;
        std::vector<int> w{expr_dim + pe};
        for (int i = 0; i + 1 < ModelDefaults::kConditionLayers; ++i) w.push_back(h);
        w.push_back(shc + 1);
        return w;
      }
      case BackendTag::ExplicitBlend:
        return {};
    }
    return {};
  }
};

template <class T>
struct AnimGaussianCloud {
  BackendTag backend = BackendTag::FeatureBlend;
  int expr_dim = ModelDefaults::kExprDim;
  int feat_dim = ModelDefaults::kFeatDim;
  int sh_degree = ModelDefaults::kShDegree;
  int pe_octaves = ModelDefaults::kPeOctaves;
  T leaky_slope = T(ModelDefaults::kLeakySlope);
  T scene_extent = T(1);
  std::array<T, 3> bounds_lo{T(-1), T(-1), T(-1)};
  std::array<T, 3> bounds_hi{T(1), T(1), T(1)};
  // Per-dimension expression range observed during training (may be empty).
  std::vector<float> expr_min, expr_max;
  ParamSet<T> params;

  std::size_t size() const noexcept { return params.mu.rows; }
  int sh_coeffs() const noexcept { return sh_coeff_count(sh_degree); }
  int pe_dim() const noexcept { return pe_width(pe_octaves); }
  std::size_t mlp_layers() const noexcept { return params.mlp.size() / 2; }

  CloudShape shape() const {
    CloudShape s;
    s.backend = backend;
    s.expr_dim = expr_dim;
    s.feat_dim = feat_dim;
    s.sh_degree = sh_degree;
    s.pe_octaves = pe_octaves;
    s.hidden = mlp_layers() > 1 ? static_cast<int>(params.mlp[0].cols) : 0;
    return s;
  }

  /// Expected column count of each per-Gaussian tensor, in for_each order.
  std::array<std::size_t, ParamSet<T>::kPerGaussianCount> expected_cols() const {
    const std::size_t b = expr_dim, f = feat_dim, c = sh_coeffs();
    const bool feats = backend_uses_features(backend);
    const bool stat = backend == BackendTag::DeltaPose;
    const bool expl = backend == BackendTag::ExplicitBlend;
    return {3, 4, 3, feats ? b * f : 0, feats ? f : 0, stat ? c : 0, stat ? 1u : 0u, expl ? b * c : 0,
            expl ? b : 0};
  }

  /// Throws ShapeError if any structural invariant is violated.
  void validate() const {
    const std::size_t n = size();
    if (n < 1) throw ShapeError("cloud must contain at least one Gaussian");
    if (sh_degree < 0 || sh_degree > 3) throw UnsupportedDegree(sh_degree);
    const auto cols = expected_cols();
    std::size_t i = 0;
    params.for_each([&](const std::string& name, const Tensor<T>& t, ParamGroup, bool per) {
      if (!per) return;
      if (t.rows != n || t.cols != cols[i] || t.data.size() != n * cols[i]) {
        throw ShapeError("tensor " + name + " has shape " + std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                         ", expected " + std::to_string(n) + "x" + std::to_string(cols[i]));
      }
      ++i;
    });
    const auto widths = shape().mlp_widths();
    if (params.mlp.size() != (widths.empty() ? 0 : 2 * (widths.size() - 1))) {
      throw ShapeError("MLP layer count does not match backend");
    }
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const auto& w = params.mlp[2 * l];
      const auto& b = params.mlp[2 * l + 1];
      if (w.rows != std::size_t(widths[l]) || w.cols != std::size_t(widths[l + 1]) || b.rows != 1 ||
          b.cols != std::size_t(widths[l + 1])) {
        throw ShapeError("MLP layer " + std::to_string(l) + " has inconsistent shape");
      }
    }
    for (int a = 0; a < 3; ++a) {
      if (!(bounds_hi[a] > bounds_lo[a])) throw ShapeError("degenerate scene bounds");
    }
  }

  template <class U>
  AnimGaussianCloud<U> cast() const {
    AnimGaussianCloud<U> out;
    out.backend = backend;
    out.expr_dim = expr_dim;
    out.feat_dim = feat_dim;
    out.sh_degree = sh_degree;
    out.pe_octaves = pe_octaves;
    out.leaky_slope = static_cast<U>(leaky_slope);
    out.scene_extent = static_cast<U>(scene_extent);
    for (int a = 0; a < 3; ++a) {
      out.bounds_lo[a] = static_cast<U>(bounds_lo[a]);
      out.bounds_hi[a] = static_cast<U>(bounds_hi[a]);
    }
    out.expr_min = expr_min;
    out.expr_max = expr_max;
    out.params = params.template cast<U>();
    return out;
  }

  /// Keeps rows listed in `index`; `-1` yields a zero row.
  void gather(std::span<const long> index) {
    params.for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool per) {
      if (per) t = gather_rows(t, index);
    });
  }
};

/// Allocates correctly-shaped zero parameters for `n` Gaussians.
template <class T>
AnimGaussianCloud<T> make_cloud(const CloudShape& shape, std::size_t n) {
  AnimGaussianCloud<T> c;
  c.backend = shape.backend;
  c.expr_dim = shape.expr_dim;
  c.feat_dim = shape.feat_dim;
  c.sh_degree = shape.sh_degree;
  c.pe_octaves = shape.pe_octaves;
  if (shape.sh_degree < 0 || shape.sh_degree > 3) throw UnsupportedDegree(shape.sh_degree);
  const auto cols = c.expected_cols();
  std::size_t i = 0;
  c.params.for_each([&](const std::string&, Tensor<T>& t, ParamGroup, bool per) {
    if (per) t.resize(n, cols[i++]);
  });
  const auto widths = shape.mlp_widths();
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    c.params.mlp.emplace_back(widths[l], widths[l + 1]);
    c.params.mlp.emplace_back(1, widths[l + 1]);
  }
  for (std::size_t g = 0; g < n; ++g) c.params.rot(g, 0) = T(1);
  return c;
}

/// PyTorch-style uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every layer;
/// motion heads start at zero shift and identity rotation.
template <class T, class Rng>
void init_mlp(AnimGaussianCloud<T>& c, Rng& rng) {
  for (std::size_t l = 0; l < c.mlp_layers(); ++l) {
    auto& w = c.params.mlp[2 * l];
    auto& b = c.params.mlp[2 * l + 1];
    const double bound = 1.0 / std::sqrt(double(w.rows));
    std::uniform_real_distribution<double> uni(-bound, bound);
    for (auto& v : w.data) v = static_cast<T>(uni(rng));
    for (auto& v : b.data) v = static_cast<T>(uni(rng));
  }
  if (backend_predicts_motion(c.backend)) {
    auto& w = c.params.mlp[c.params.mlp.size() - 2];
    auto& b = c.params.mlp.back();
    const std::size_t first = c.backend == BackendTag::ChangeAll ? std::size_t(c.sh_coeffs() + 1) : 0;
    for (std::size_t r = 0; r < w.rows; ++r)
      for (std::size_t k = first; k < first + 7; ++k) w(r, k) = T(0);
    for (std::size_t k = first; k < first + 7; ++k) b(0, k) = T(0);
    b(0, first + 3) = T(1);  // r_t = (1, 0, 0, 0)
  }
}

template <class T>
T logit(T p) {
  return std::log(p / (T(1) - p));
}

/// Mean distance to the (up to) 3 nearest other points, by exhaustive search.
inline std::vector<double> mean_knn_distance(const std::vector<Eigen::Vector3d>& pts, int k = 3) {
  std::vector<double> out(pts.size(), 0.0);
  parallel_for(
      pts.size(),
      [&](std::size_t i) {
        std::vector<double> best;
        for (std::size_t j = 0; j < pts.size(); ++j) {
          if (j == i) continue;
          const double d2 = (pts[i] - pts[j]).squaredNorm();
          if (best.size() < std::size_t(k)) {
            best.push_back(d2);
            std::push_heap(best.begin(), best.end());
          } else if (d2 < best.front()) {
            std::pop_heap(best.begin(), best.end());
            best.back() = d2;
            std::push_heap(best.begin(), best.end());
          }
        }
        if (best.empty()) return;
        double s = 0;
        for (double d2 : best) s += std::sqrt(std::max(d2, 1e-14));
        out[i] = s / double(best.size());
      },
      64);
  return out;
}

struct InitOptions {
  CloudShape shape;
  std::size_t sample_count = ModelDefaults::kInitPoints;
  // Sampling box (used when no seed points are given) and positional-encoding
  // bounds. Without seed points a box is mandatory.
  std::optional<std::array<Eigen::Vector3d, 2>> bounds;
  double feat_bias_std = 0.01;
  double initial_opacity = 0.1;  // explicit-opacity backends
  std::uint64_t seed = 0;
};

/// Builds a fresh cloud from seed points or by uniform sampling inside the
/// bounds. Feature bases start at zero.
template <class T = float>
AnimGaussianCloud<T> init_cloud(std::vector<Eigen::Vector3d> points, const InitOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  if (points.empty()) {
    if (!opt.bounds) throw InitError("init_cloud: no seed points and no bounds to sample within");
    const auto& [lo, hi] = *opt.bounds;
    if (opt.sample_count == 0) throw InitError("init_cloud: sample count must be positive");
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    points.resize(opt.sample_count);
    for (auto& p : points) {
      for (int a = 0; a < 3; ++a) p[a] = lo[a] + (hi[a] - lo[a]) * uni(rng);
    }
  }
  const std::size_t n = points.size();
  auto cloud = make_cloud<T>(opt.shape, n);

  Eigen::Vector3d lo, hi;
  if (opt.bounds) {
    lo = (*opt.bounds)[0];
    hi = (*opt.bounds)[1];
  } else {
    lo = hi = points[0];
    for (const auto& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const double pad = std::max(0.1 * (hi - lo).maxCoeff(), 1e-3);
    lo.array() -= pad;
    hi.array() += pad;
  }
  for (int a = 0; a < 3; ++a) {
    if (!(hi[a] > lo[a])) throw InitError("init_cloud: degenerate bounds");
    cloud.bounds_lo[a] = static_cast<T>(lo[a]);
    cloud.bounds_hi[a] = static_cast<T>(hi[a]);
  }
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  double radius = 0;
  for (const auto& p : points) radius = std::max(radius, (p - center).norm());
  cloud.scene_extent = static_cast<T>(std::max(radius, 1e-3));

  const auto knn = mean_knn_distance(points);
  const double fallback = 0.01 * (hi - lo).maxCoeff();
  auto& prm = cloud.params;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = knn[i] > 0 ? knn[i] : fallback;
    for (int a = 0; a < 3; ++a) {
      prm.mu(i, a) = static_cast<T>(points[i][a]);
      prm.log_scale(i, a) = static_cast<T>(std::log(s));
    }
  }
  std::normal_distribution<double> bias(0.0, opt.feat_bias_std);
  for (auto& v : prm.feat_bias.data) v = static_cast<T>(bias(rng));
  const T op = logit(static_cast<T>(opt.initial_opacity));
  for (auto& v : prm.opacity_static.data) v = op;
  for (auto& v : prm.alpha_basis.data) v = op;
  init_mlp(cloud, rng);
  cloud.validate();
  return cloud;
}

}  // namespace blendsplat
