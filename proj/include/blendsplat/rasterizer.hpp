// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "blendsplat/backends.hpp"
#include "blendsplat/camera.hpp"
#include "blendsplat/geometry.hpp"
#include "blendsplat/parallel.hpp"
#include "blendsplat/sh.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat {

/// Compositing constants shared with the reference renderer.
struct CompositeRule {
  static constexpr double kDilation = 0.3;
  static constexpr double kMaxAlpha = 0.99;
  static constexpr double kMinAlpha = 1.0 / 255.0;
  static constexpr double kMinTransmittance = 1e-4;
  // Footprints are truncated at Mahalanobis distance 3 (power < -4.5).
  static constexpr double kMinPower = -4.5;
  static constexpr double kRadiusSigmas = 3.0;
  static constexpr double kFrustumGuard = 1.3;
};

/// Camera converted to the working scalar type.
template <class T>
struct CameraView {
  Mat3<T> rot;
  Vec3<T> trans;
  Vec3<T> center;
  T fx, fy, cx, cy, znear, zfar;
  T lim_x_lo, lim_x_hi, lim_y_lo, lim_y_hi;
  int width, height;

  explicit CameraView(const Camera& c)
      : rot(c.rotation().cast<T>()),
        trans(c.translation().cast<T>()),
        center(c.center().cast<T>()),
        fx(T(c.fx)),
        fy(T(c.fy)),
        cx(T(c.cx)),
        cy(T(c.cy)),
        znear(T(c.znear)),
        zfar(T(c.zfar)),
        width(c.width),
        height(c.height) {
    const double g = CompositeRule::kFrustumGuard;
    lim_x_lo = T(-g * c.cx / c.fx);
    lim_x_hi = T(g * (c.width - c.cx) / c.fx);
    lim_y_lo = T(-g * c.cy / c.fy);
    lim_y_hi = T(g * (c.height - c.cy) / c.fy);
  }
};

template <class T>
struct Projection {
  Vec3<T> t_cam;   // camera-space center
  Vec2<T> mean;    // pixel coordinates
  Mat2<T> cov2d;   // dilated screen covariance
  Vec3<T> conic;   // (A, B, C) of the inverse covariance
  T depth;
  int radius;
};

/// Screen-space footprint of a 3-D Gaussian under the local affine
/// approximation of the perspective projection. Returns nullopt when culled.
template <class T>
std::optional<Projection<T>> project_gaussian(const Vec3<T>& mu, const Mat3<T>& cov3d, const CameraView<T>& cam) {
  const Vec3<T> t = cam.rot * mu + cam.trans;
  if (!(t[2] > cam.znear) || !(t[2] < cam.zfar)) return std::nullopt;
  const T inv_z = T(1) / t[2];
  const T xz = t[0] * inv_z, yz = t[1] * inv_z;
  // Centers outside the guard band are culled, so the Jacobian below never
  // needs the clamped form.
  if (xz < cam.lim_x_lo || xz > cam.lim_x_hi || yz < cam.lim_y_lo || yz > cam.lim_y_hi) return std::nullopt;
  Eigen::Matrix<T, 2, 3> j;
  j << cam.fx * inv_z, T(0), -cam.fx * xz * inv_z, T(0), cam.fy * inv_z, -cam.fy * yz * inv_z;
  const Eigen::Matrix<T, 2, 3> jw = j * cam.rot;
  Mat2<T> cov = jw * cov3d * jw.transpose();
  cov(0, 1) = cov(1, 0) = T(0.5) * (cov(0, 1) + cov(1, 0));
  cov(0, 0) += T(CompositeRule::kDilation);
  cov(1, 1) += T(CompositeRule::kDilation);
  const T det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  if (!(det > T(0))) return std::nullopt;
  Projection<T> p;
  p.t_cam = t;
  p.mean = Vec2<T>(cam.fx * xz + cam.cx, cam.fy * yz + cam.cy);
  p.cov2d = cov;
  p.conic = Vec3<T>(cov(1, 1) / det, -cov(0, 1) / det, cov(0, 0) / det);
  p.depth = t[2];
  const T mid = T(0.5) * (cov(0, 0) + cov(1, 1));
  const T lambda_max = mid + std::sqrt(std::max(T(0), mid * mid - det));
  p.radius = static_cast<int>(std::ceil(T(CompositeRule::kRadiusSigmas) * std::sqrt(lambda_max)));
  return p;
}

template <class T>
struct RenderAux {
  std::vector<T> final_transmittance;  // per pixel
  std::vector<int> contributors;       // per pixel
  std::vector<T> max_alpha;            // per Gaussian, max composited alpha this frame
  std::vector<T> mean2d_grad_norm;     // per Gaussian, |dL/d mean2d| in NDC units (set by backward)
  std::vector<std::uint8_t> visible;   // per Gaussian
};

template <class T>
struct RasterCache {
  struct Splat {
    Projection<T> proj;
    Vec3<T> rgb;
    Vec3<T> dir;
    T dir_len;
    T alpha;
    std::array<int, 4> tiles;  // x0, y0, x1, y1 (exclusive)
  };
  CameraView<T> cam;
  int tile_size;
  int tiles_x, tiles_y;
  Vec3<T> background;
  std::vector<Splat> splats;
  std::vector<std::uint8_t> visible;
  std::vector<std::uint32_t> tile_begin;  // size tiles + 1
  std::vector<std::uint32_t> pair_gauss;  // per (tile, splat) pair, depth-ordered within each tile

  explicit RasterCache(const Camera& c) : cam(c) {}
};

struct RasterSettings {
  int tile_size = 16;
  std::array<double, 3> background{1.0, 1.0, 1.0};
};

namespace detail {

/// Compact per-tile copy of the splat fields the pixel loop reads.
template <class T>
struct TileSplats {
  std::vector<T> x, y, a, b, c, alpha, r, g, bl;
  std::vector<std::uint32_t> pair;
  void load(const RasterCache<T>& cache, std::size_t tile) {
    const std::uint32_t begin = cache.tile_begin[tile], end = cache.tile_begin[tile + 1];
    const std::size_t n = end - begin;
    for (auto* v : {&x, &y, &a, &b, &c, &alpha, &r, &g, &bl}) v->resize(n);
    pair.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& s = cache.splats[cache.pair_gauss[begin + k]];
      x[k] = s.proj.mean[0];
      y[k] = s.proj.mean[1];
      a[k] = s.proj.conic[0];
      b[k] = s.proj.conic[1];
      c[k] = s.proj.conic[2];
      alpha[k] = s.alpha;
      r[k] = s.rgb[0];
      g[k] = s.rgb[1];
      bl[k] = s.rgb[2];
      pair[k] = begin + std::uint32_t(k);
    }
  }
  std::size_t size() const { return x.size(); }
};

/// Front-to-back compositing over one pixel. visit(k, alpha', T_before, gauss,
/// power, unclamped) is called for every contributor; returns the final
/// transmittance.
template <class T, class Visit>
T composite_pixel(const TileSplats<T>& ts, T px, T py, Visit&& visit) {
  // Exponents are computed a block at a time in a branch-free loop the
  // compiler vectorizes; most splats in a tile miss any given pixel.
  constexpr std::size_t kBlock = 32;
  T power[kBlock];
  T trans = T(1);
  const std::size_t n = ts.size();
  for (std::size_t k0 = 0; k0 < n; k0 += kBlock) {
    const std::size_t m = std::min(kBlock, n - k0);
    const T* xs = ts.x.data() + k0;
    const T* ys = ts.y.data() + k0;
    const T* as = ts.a.data() + k0;
    const T* bs = ts.b.data() + k0;
    const T* cs = ts.c.data() + k0;
    for (std::size_t j = 0; j < m; ++j) {
      const T dx = xs[j] - px, dy = ys[j] - py;
      power[j] = T(-0.5) * (as[j] * dx * dx + cs[j] * dy * dy) - bs[j] * dx * dy;
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (power[j] > T(0) || power[j] < T(CompositeRule::kMinPower)) continue;
      const std::size_t k = k0 + j;
      const T raw = ts.alpha[k] * std::exp(power[j]);
      const T a = std::min(T(CompositeRule::kMaxAlpha), raw);
      if (a < T(CompositeRule::kMinAlpha)) continue;
      visit(k, a, trans, raw);
      trans *= T(1) - a;
      if (trans < T(CompositeRule::kMinTransmittance)) return trans;
    }
  }
  return trans;
}

template <class T>
void bin_splats(RasterCache<T>& cache) {
  const std::size_t n = cache.splats.size();
  std::vector<std::uint32_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (cache.visible[i]) order.push_back(std::uint32_t(i));
  std::sort(order.begin(), order.end(), [&](std::uint32_t l, std::uint32_t r) {
    const T dl = cache.splats[l].proj.depth, dr = cache.splats[r].proj.depth;
    return dl < dr || (dl == dr && l < r);
  });
  const std::size_t tiles = std::size_t(cache.tiles_x) * cache.tiles_y;
  std::vector<std::uint32_t> count(tiles + 1, 0);
  for (auto g : order) {
    const auto& t = cache.splats[g].tiles;
    for (int ty = t[1]; ty < t[3]; ++ty)
      for (int tx = t[0]; tx < t[2]; ++tx) ++count[std::size_t(ty) * cache.tiles_x + tx];
  }
  cache.tile_begin.assign(tiles + 1, 0);
  for (std::size_t i = 0; i < tiles; ++i) cache.tile_begin[i + 1] = cache.tile_begin[i] + count[i];
  cache.pair_gauss.resize(cache.tile_begin[tiles]);
  std::vector<std::uint32_t> cursor(cache.tile_begin.begin(), cache.tile_begin.end() - 1);
  for (auto g : order) {
    const auto& t = cache.splats[g].tiles;
    for (int ty = t[1]; ty < t[3]; ++ty)
      for (int tx = t[0]; tx < t[2]; ++tx) cache.pair_gauss[cursor[std::size_t(ty) * cache.tiles_x + tx]++] = g;
  }
}

}  // namespace detail

/// Projects, evaluates colors, and bins every Gaussian. The returned cache
/// drives forward compositing, scalar compositing, and the backward pass.
template <class T>
RasterCache<T> prepare_raster(const FrameRenderParams<T>& params, const Camera& camera, const RasterSettings& settings,
                              std::span<const std::uint8_t> keep = {}) {
  RasterCache<T> cache(camera);
  const int ts = settings.tile_size;
  cache.tile_size = ts;
  cache.tiles_x = (camera.width + ts - 1) / ts;
  cache.tiles_y = (camera.height + ts - 1) / ts;
  cache.background = Vec3<T>(T(settings.background[0]), T(settings.background[1]), T(settings.background[2]));
  const std::size_t n = params.size();
  cache.splats.resize(n);
  cache.visible.assign(n, 0);
  const auto& cam = cache.cam;
  parallel_for(
      n,
      [&](std::size_t i) {
        if (!keep.empty() && !keep[i]) return;
        const Vec3<T> mu(params.mu(i, 0), params.mu(i, 1), params.mu(i, 2));
        const Vec4<T> q(params.rot(i, 0), params.rot(i, 1), params.rot(i, 2), params.rot(i, 3));
        const Vec3<T> ls(params.log_scale(i, 0), params.log_scale(i, 1), params.log_scale(i, 2));
        const auto proj = project_gaussian(mu, compute_cov3d(q, ls), cam);
        if (!proj) return;
        auto& s = cache.splats[i];
        s.proj = *proj;
        // The 3-sigma ellipse spans 3 sqrt(cov_xx) by 3 sqrt(cov_yy), which is
        // tighter than the isotropic radius for elongated splats.
        const T k = T(CompositeRule::kRadiusSigmas);
        const T rx = std::min(T(proj->radius), std::ceil(k * std::sqrt(proj->cov2d(0, 0))));
        const T ry = std::min(T(proj->radius), std::ceil(k * std::sqrt(proj->cov2d(1, 1))));
        const int x0 = std::max(0, int(std::floor(proj->mean[0] - rx - T(0.5))));
        const int x1 = std::min(camera.width - 1, int(std::ceil(proj->mean[0] + rx - T(0.5))));
        const int y0 = std::max(0, int(std::floor(proj->mean[1] - ry - T(0.5))));
        const int y1 = std::min(camera.height - 1, int(std::ceil(proj->mean[1] + ry - T(0.5))));
        if (x0 > x1 || y0 > y1) return;
        s.tiles = {x0 / ts, y0 / ts, x1 / ts + 1, y1 / ts + 1};
        const Vec3<T> v = mu - cam.center;
        s.dir_len = v.norm();
        s.dir = v / s.dir_len;
        s.rgb = eval_sh(params.sh.row(i), s.dir, params.sh_degree);
        s.alpha = params.alpha(i, 0);
        cache.visible[i] = 1;
      },
      128);
  detail::bin_splats(cache);
  return cache;
}

/// Composites the prepared splats front to back.
template <class T>
Image<T> composite_forward(const RasterCache<T>& cache, RenderAux<T>* aux = nullptr) {
  const int w = cache.cam.width, h = cache.cam.height, ts = cache.tile_size;
  Image<T> img(w, h);
  std::vector<T> pair_max;
  if (aux) {
    aux->final_transmittance.assign(std::size_t(w) * h, T(1));
    aux->contributors.assign(std::size_t(w) * h, 0);
    aux->visible = cache.visible;
    pair_max.assign(cache.pair_gauss.size(), T(0));
  }
  const std::size_t tiles = std::size_t(cache.tiles_x) * cache.tiles_y;
  parallel_for(tiles, [&](std::size_t tile) {
    detail::TileSplats<T> local;
    local.load(cache, tile);
    const int tx = int(tile % cache.tiles_x), ty = int(tile / cache.tiles_x);
    for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
        T cr = 0, cg = 0, cb = 0;
        int contrib = 0;
        const T trans = detail::composite_pixel(local, T(x) + T(0.5), T(y) + T(0.5),
                                                [&](std::size_t k, T a, T t_before, T) {
                                                  const T wgt = a * t_before;
                                                  cr += local.r[k] * wgt;
                                                  cg += local.g[k] * wgt;
                                                  cb += local.bl[k] * wgt;
                                                  ++contrib;
                                                  if (aux) {
                                                    T& m = pair_max[local.pair[k]];
                                                    m = std::max(m, a);
                                                  }
                                                });
        T* out = img.at(x, y);
        out[0] = cr + cache.background[0] * trans;
        out[1] = cg + cache.background[1] * trans;
        out[2] = cb + cache.background[2] * trans;
        if (aux) {
          aux->final_transmittance[std::size_t(y) * w + x] = trans;
          aux->contributors[std::size_t(y) * w + x] = contrib;
        }
      }
    }
  });
  if (aux) {
    aux->max_alpha.assign(cache.splats.size(), T(0));
    for (std::size_t k = 0; k < cache.pair_gauss.size(); ++k) {
      T& m = aux->max_alpha[cache.pair_gauss[k]];
      m = std::max(m, pair_max[k]);
    }
    aux->mean2d_grad_norm.assign(cache.splats.size(), T(0));
  }
  return img;
}

template <class T>
struct RasterOutput {
  Image<T> image;
  RasterCache<T> cache;
  RenderAux<T> aux;
};

template <class T>
RasterOutput<T> rasterize_forward(const FrameRenderParams<T>& params, const Camera& camera,
                                  const RasterSettings& settings = {}) {
  RasterCache<T> cache = prepare_raster(params, camera, settings);
  RenderAux<T> aux;
  Image<T> img = composite_forward(cache, &aux);
  return {std::move(img), std::move(cache), std::move(aux)};
}

/// Composites one scalar per Gaussian with the cached compositing weights
/// (alpha' * T), over a zero background.
template <class T>
std::vector<T> composite_scalar(const RasterCache<T>& cache, std::span<const T> values) {
  const int w = cache.cam.width, h = cache.cam.height, ts = cache.tile_size;
  std::vector<T> out(std::size_t(w) * h, T(0));
  const std::size_t tiles = std::size_t(cache.tiles_x) * cache.tiles_y;
  parallel_for(tiles, [&](std::size_t tile) {
    detail::TileSplats<T> local;
    local.load(cache, tile);
    const int tx = int(tile % cache.tiles_x), ty = int(tile / cache.tiles_x);
    for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
        T acc = 0;
        detail::composite_pixel(local, T(x) + T(0.5), T(y) + T(0.5), [&](std::size_t k, T a, T t_before, T) {
          acc += values[cache.pair_gauss[local.pair[k]]] * a * t_before;
        });
        out[std::size_t(y) * w + x] = acc;
      }
    }
  });
  return out;
}

/// Adjoint of rasterize_forward. Gradients are exact for the clamped and
/// thresholded forward (zero through active clamps). Fills
/// aux->mean2d_grad_norm when `aux` is given.
template <class T>
FrameGrads<T> rasterize_backward(const FrameRenderParams<T>& params, const RasterCache<T>& cache,
                                 const Image<T>& d_image, RenderAux<T>* aux = nullptr) {
  const int w = cache.cam.width, h = cache.cam.height, ts = cache.tile_size;
  if (d_image.width != w || d_image.height != h || d_image.pixels.size() != std::size_t(3) * w * h) {
    throw ShapeError("rasterize_backward: gradient image does not match the cached frame");
  }
  if (cache.splats.size() != params.size()) throw ShapeError("rasterize_backward: cache/params size mismatch");
  constexpr int kPairStride = 9;  // rgb(3) alpha(1) mean(2) conic(3)
  std::vector<T> pair_grad(cache.pair_gauss.size() * kPairStride, T(0));
  const std::size_t tiles = std::size_t(cache.tiles_x) * cache.tiles_y;

  parallel_for(tiles, [&](std::size_t tile) {
    detail::TileSplats<T> local;
    local.load(cache, tile);
    struct Hit {
      std::uint32_t k;
      T a, t_before, raw;
    };
    std::vector<Hit> hits;
    const int tx = int(tile % cache.tiles_x), ty = int(tile / cache.tiles_x);
    for (int y = ty * ts; y < std::min(h, (ty + 1) * ts); ++y) {
      for (int x = tx * ts; x < std::min(w, (tx + 1) * ts); ++x) {
        const T* dpix = d_image.at(x, y);
        if (dpix[0] == T(0) && dpix[1] == T(0) && dpix[2] == T(0)) continue;
        const T px = T(x) + T(0.5), py = T(y) + T(0.5);
        hits.clear();
        detail::composite_pixel(local, px, py, [&](std::size_t k, T a, T t_before, T raw) {
          hits.push_back({std::uint32_t(k), a, t_before, raw});
        });
        // Back to front; `rest` is the color behind the current splat,
        // normalized by the transmittance after it (background at the end).
        T rest[3] = {cache.background[0], cache.background[1], cache.background[2]};
        for (std::size_t hi = hits.size(); hi-- > 0;) {
          const Hit& hit = hits[hi];
          const std::size_t k = hit.k;
          const T col[3] = {local.r[k], local.g[k], local.bl[k]};
          T* pg = pair_grad.data() + std::size_t(local.pair[k]) * kPairStride;
          const T wgt = hit.a * hit.t_before;
          T d_a = 0;
          for (int ch = 0; ch < 3; ++ch) {
            pg[ch] += wgt * dpix[ch];
            d_a += (col[ch] - rest[ch]) * dpix[ch];
            rest[ch] = col[ch] * hit.a + (T(1) - hit.a) * rest[ch];
          }
          d_a *= hit.t_before;
          if (hit.raw > T(CompositeRule::kMaxAlpha)) continue;
          const T gauss = hit.raw / local.alpha[k];
          pg[3] += gauss * d_a;
          const T d_power = hit.raw * d_a;
          const T dx = local.x[k] - px, dy = local.y[k] - py;
          pg[4] += -d_power * (local.a[k] * dx + local.b[k] * dy);
          pg[5] += -d_power * (local.b[k] * dx + local.c[k] * dy);
          pg[6] += T(-0.5) * dx * dx * d_power;
          pg[7] += -dx * dy * d_power;
          pg[8] += T(-0.5) * dy * dy * d_power;
        }
      }
    }
  });

  // Fixed-order reduction from pair slots to Gaussians.
  const std::size_t n = params.size();
  std::vector<T> gsum(n * kPairStride, T(0));
  for (std::size_t k = 0; k < cache.pair_gauss.size(); ++k) {
    T* dst = gsum.data() + std::size_t(cache.pair_gauss[k]) * kPairStride;
    const T* src = pair_grad.data() + k * kPairStride;
    for (int j = 0; j < kPairStride; ++j) dst[j] += src[j];
  }

  FrameGrads<T> out = FrameGrads<T>::zeros_for(params);
  if (aux) aux->mean2d_grad_norm.assign(n, T(0));
  const auto& cam = cache.cam;
  parallel_for(
      n,
      [&](std::size_t i) {
        if (!cache.visible[i]) return;
        const auto& s = cache.splats[i];
        const T* gs = gsum.data() + i * kPairStride;
        out.alpha(i, 0) = gs[3];
        if (aux) {
          const T nx = gs[4] * T(0.5) * T(w), ny = gs[5] * T(0.5) * T(h);
          aux->mean2d_grad_norm[i] = std::sqrt(nx * nx + ny * ny);
        }

        // Color -> SH coefficients and view direction.
        const Vec3<T> d_rgb(gs[0], gs[1], gs[2]);
        const Vec3<T> d_dir = eval_sh_backward(params.sh.row(i), s.dir, params.sh_degree, d_rgb, out.sh.row(i));
        Vec3<T> d_mu = (d_dir - s.dir * s.dir.dot(d_dir)) / s.dir_len;

        // Conic -> dilated 2-D covariance.
        const Mat2<T>& cov = s.proj.cov2d;
        const T a = cov(0, 0), b = cov(0, 1), c = cov(1, 1);
        const T det = a * c - b * b;
        const T inv_det2 = T(1) / (det * det);
        const T dA = gs[6], dB = gs[7], dC = gs[8];
        const T d_a = inv_det2 * (-c * c * dA + b * c * dB - b * b * dC);
        const T d_c = inv_det2 * (-b * b * dA + a * b * dB - a * a * dC);
        const T d_b = inv_det2 * (T(2) * b * c * dA - (a * c + b * b) * dB + T(2) * a * b * dC);
        Mat2<T> g2;
        g2 << d_a, T(0.5) * d_b, T(0.5) * d_b, d_c;

        const Vec3<T>& t = s.proj.t_cam;
        const T inv_z = T(1) / t[2];
        Eigen::Matrix<T, 2, 3> j;
        j << cam.fx * inv_z, T(0), -cam.fx * t[0] * inv_z * inv_z, T(0), cam.fy * inv_z, -cam.fy * t[1] * inv_z * inv_z;
        const Eigen::Matrix<T, 2, 3> jw = j * cam.rot;
        const Vec4<T> q(params.rot(i, 0), params.rot(i, 1), params.rot(i, 2), params.rot(i, 3));
        const Vec3<T> ls(params.log_scale(i, 0), params.log_scale(i, 1), params.log_scale(i, 2));
        const Mat3<T> cov3d = compute_cov3d(q, ls);
        Mat3<T> d_cov3d = jw.transpose() * g2 * jw;
        d_cov3d = T(0.5) * (d_cov3d + d_cov3d.transpose());
        const Eigen::Matrix<T, 2, 3> d_jw = T(2) * g2 * jw * cov3d;
        const Eigen::Matrix<T, 2, 3> d_j = d_jw * cam.rot.transpose();

        // Camera-space center: through the mean and through J.
        Vec3<T> d_t;
        const T dmx = gs[4], dmy = gs[5];
        d_t[0] = dmx * cam.fx * inv_z - d_j(0, 2) * cam.fx * inv_z * inv_z;
        d_t[1] = dmy * cam.fy * inv_z - d_j(1, 2) * cam.fy * inv_z * inv_z;
        d_t[2] = -dmx * cam.fx * t[0] * inv_z * inv_z - dmy * cam.fy * t[1] * inv_z * inv_z -
                 d_j(0, 0) * cam.fx * inv_z * inv_z + d_j(0, 2) * T(2) * cam.fx * t[0] * inv_z * inv_z * inv_z -
                 d_j(1, 1) * cam.fy * inv_z * inv_z + d_j(1, 2) * T(2) * cam.fy * t[1] * inv_z * inv_z * inv_z;
        d_mu += cam.rot.transpose() * d_t;
        for (int k = 0; k < 3; ++k) out.mu(i, k) = d_mu[k];

        const auto cg = compute_cov3d_backward(q, ls, d_cov3d);
        for (int k = 0; k < 4; ++k) out.rot(i, k) = cg.d_rot[k];
        for (int k = 0; k < 3; ++k) out.log_scale(i, k) = cg.d_log_scale[k];
      },
      64);
  return out;
}

/// Renders after dropping the nearest floor(fraction * N) Gaussians by
/// camera-space depth (ties broken by index).
template <class T>
Image<T> peel_render(const FrameRenderParams<T>& params, const Camera& camera, double fraction,
                     const RasterSettings& settings = {}) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("peel fraction must lie in [0, 1]");
  const std::size_t n = params.size();
  const std::size_t drop = static_cast<std::size_t>(std::floor(fraction * double(n)));
  const CameraView<T> cam(camera);
  std::vector<T> depth(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3<T> mu(params.mu(i, 0), params.mu(i, 1), params.mu(i, 2));
    depth[i] = (cam.rot * mu + cam.trans)[2];
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t l, std::uint32_t r) {
    return depth[l] < depth[r] || (depth[l] == depth[r] && l < r);
  });
  std::vector<std::uint8_t> keep(n, 1);
  for (std::size_t k = 0; k < drop; ++k) keep[order[k]] = 0;
  const auto cache = prepare_raster(params, camera, settings, std::span<const std::uint8_t>(keep));
  return composite_forward(cache);
}

/// Blue (negative) / white (zero) / red (positive) map of a signed field,
/// saturating at |v| = scale.
template <class T>
Image<T> diverging_colormap(std::span<const T> field, int width, int height, T scale = T(1)) {
  Image<T> img(width, height);
  for (std::size_t p = 0; p < field.size(); ++p) {
    const T v = std::clamp(field[p] / scale, T(-1), T(1));
    T* px = img.pixels.data() + 3 * p;
    if (v >= T(0)) {
      px[0] = T(1);
      px[1] = px[2] = T(1) - v;
    } else {
      px[0] = px[1] = T(1) + v;
      px[2] = T(1);
    }
  }
  return img;
}

template <class T>
struct OpacityDiff {
  std::vector<T> field;  // signed, per pixel
  Image<T> image;        // diverging color map
};

/// Composites alpha_j - alpha_i per Gaussian with the geometry and
/// compositing weights of frame j.
template <class T>
OpacityDiff<T> render_opacity_diff(const AnimGaussianCloud<T>& cloud, std::span<const T> expr_i,
                                   std::span<const T> expr_j, const Camera& camera, const RasterSettings& settings = {}) {
  const auto fi = resolve_frame(cloud, expr_i);
  const auto fj = resolve_frame(cloud, expr_j);
  const auto cache = prepare_raster(fj, camera, settings);
  std::vector<T> diff(cloud.size());
  for (std::size_t g = 0; g < diff.size(); ++g) diff[g] = fj.alpha(g, 0) - fi.alpha(g, 0);
  OpacityDiff<T> out;
  out.field = composite_scalar(cache, std::span<const T>(diff));
  out.image = diverging_colormap(std::span<const T>(out.field), camera.width, camera.height);
  return out;
}

}  // namespace blendsplat
