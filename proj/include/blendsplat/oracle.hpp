// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

// Slow reference renderer and finite-difference helpers used to validate the
// tiled rasterizer. Nothing here shares code with rasterizer.hpp or sh.hpp
// beyond the data containers.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "blendsplat/backends.hpp"
#include "blendsplat/camera.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat::oracle {

/// Textbook real spherical harmonics on the unit sphere with the (-1)^m
/// phase, up to degree 3, in the same (l, m = -l..l) ordering.
inline void real_sh(double x, double y, double z, int degree, double* out) {
  constexpr double pi = std::numbers::pi;
  out[0] = 0.5 * std::sqrt(1.0 / pi);
  if (degree < 1) return;
  const double k1 = std::sqrt(3.0 / (4.0 * pi));
  out[1] = -k1 * y;
  out[2] = k1 * z;
  out[3] = -k1 * x;
  if (degree < 2) return;
  out[4] = 0.5 * std::sqrt(15.0 / pi) * x * y;
  out[5] = -0.5 * std::sqrt(15.0 / pi) * y * z;
  out[6] = 0.25 * std::sqrt(5.0 / pi) * (3.0 * z * z - 1.0);
  out[7] = -0.5 * std::sqrt(15.0 / pi) * x * z;
  out[8] = 0.25 * std::sqrt(15.0 / pi) * (x * x - y * y);
  if (degree < 3) return;
  out[9] = -0.25 * std::sqrt(35.0 / (2.0 * pi)) * y * (3.0 * x * x - y * y);
  out[10] = 0.5 * std::sqrt(105.0 / pi) * x * y * z;
  out[11] = -0.25 * std::sqrt(21.0 / (2.0 * pi)) * y * (5.0 * z * z - 1.0);
  out[12] = 0.25 * std::sqrt(7.0 / pi) * (5.0 * z * z * z - 3.0 * z);
  out[13] = -0.25 * std::sqrt(21.0 / (2.0 * pi)) * x * (5.0 * z * z - 1.0);
  out[14] = 0.25 * std::sqrt(105.0 / pi) * z * (x * x - y * y);
  out[15] = -0.25 * std::sqrt(35.0 / (2.0 * pi)) * x * (x * x - 3.0 * y * y);
}

struct Footprint {
  bool culled = true;
  double u = 0, v = 0, depth = 0;
  Eigen::Matrix2d inv_cov;
  double r = 0, g = 0, b = 0, alpha = 0;
};

/// Direct per-Gaussian evaluation in double precision.
template <class T>
Footprint footprint(const FrameRenderParams<T>& p, std::size_t i, const Camera& cam) {
  Footprint f;
  const Eigen::Matrix3d w = cam.world_to_cam.topLeftCorner<3, 3>();
  const Eigen::Vector3d tr = cam.world_to_cam.topRightCorner<3, 1>();
  const Eigen::Vector3d mu(double(p.mu(i, 0)), double(p.mu(i, 1)), double(p.mu(i, 2)));
  const Eigen::Vector3d t = w * mu + tr;
  if (t.z() <= cam.znear || t.z() >= cam.zfar) return f;
  const double gx = 1.3 * cam.cx / cam.fx, gx2 = 1.3 * (cam.width - cam.cx) / cam.fx;
  const double gy = 1.3 * cam.cy / cam.fy, gy2 = 1.3 * (cam.height - cam.cy) / cam.fy;
  if (t.x() / t.z() < -gx || t.x() / t.z() > gx2 || t.y() / t.z() < -gy || t.y() / t.z() > gy2) return f;

  Eigen::Quaterniond q(double(p.rot(i, 0)), double(p.rot(i, 1)), double(p.rot(i, 2)), double(p.rot(i, 3)));
  q.normalize();
  const Eigen::Vector3d s(std::exp(double(p.log_scale(i, 0))), std::exp(double(p.log_scale(i, 1))),
                          std::exp(double(p.log_scale(i, 2))));
  const Eigen::Matrix3d rs = q.toRotationMatrix() * s.asDiagonal();
  const Eigen::Matrix3d cov3 = rs * rs.transpose();
  Eigen::Matrix<double, 2, 3> jac;
  jac << cam.fx / t.z(), 0.0, -cam.fx * t.x() / (t.z() * t.z()), 0.0, cam.fy / t.z(), -cam.fy * t.y() / (t.z() * t.z());
  Eigen::Matrix2d cov2 = jac * w * cov3 * w.transpose() * jac.transpose();
  cov2 += 0.3 * Eigen::Matrix2d::Identity();
  if (cov2.determinant() <= 0.0) return f;
  f.inv_cov = cov2.inverse();
  f.u = cam.fx * t.x() / t.z() + cam.cx;
  f.v = cam.fy * t.y() / t.z() + cam.cy;
  f.depth = t.z();

  const Eigen::Vector3d dir = (mu - cam.center()).normalized();
  double basis[16];
  real_sh(dir.x(), dir.y(), dir.z(), p.sh_degree, basis);
  const int nb = (p.sh_degree + 1) * (p.sh_degree + 1);
  double rgb[3] = {0.5, 0.5, 0.5};
  for (int k = 0; k < nb; ++k)
    for (int c = 0; c < 3; ++c) rgb[c] += double(p.sh(i, 3 * k + c)) * basis[k];
  f.r = std::max(0.0, rgb[0]);
  f.g = std::max(0.0, rgb[1]);
  f.b = std::max(0.0, rgb[2]);
  f.alpha = double(p.alpha(i, 0));
  f.culled = false;
  return f;
}

/// Renders by visiting every Gaussian for every pixel in global depth order.
template <class T>
Image<double> render(const FrameRenderParams<T>& p, const Camera& cam, const std::array<double, 3>& background,
                     std::span<const std::uint8_t> keep = {}) {
  const std::size_t n = p.size();
  std::vector<Footprint> fp(n);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (!keep.empty() && !keep[i]) continue;
    fp[i] = footprint(p, i, cam);
    if (!fp[i].culled) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fp[a].depth < fp[b].depth; });

  Image<double> img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector2d px(x + 0.5, y + 0.5);
      double c[3] = {0, 0, 0};
      double trans = 1.0;
      for (std::size_t i : order) {
        const Footprint& f = fp[i];
        const Eigen::Vector2d d = px - Eigen::Vector2d(f.u, f.v);
        const double m2 = d.dot(f.inv_cov * d);
        if (m2 < 0.0 || m2 > 9.0) continue;
        const double a = std::min(0.99, f.alpha * std::exp(-0.5 * m2));
        if (a < 1.0 / 255.0) continue;
        c[0] += f.r * a * trans;
        c[1] += f.g * a * trans;
        c[2] += f.b * a * trans;
        trans *= 1.0 - a;
        if (trans < 1e-4) break;
      }
      double* o = img.at(x, y);
      for (int ch = 0; ch < 3; ++ch) o[ch] = c[ch] + background[ch] * trans;
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Finite differences.

struct GradCheckEntry {
  std::size_t index = 0;
  double analytic = 0, numeric = 0, rel_error = 0;
  bool passed = false;
  bool near_boundary = false;  // one-sided differences disagree
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t passed() const {
    return std::size_t(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.passed; }));
  }
  double pass_fraction() const { return entries.empty() ? 1.0 : double(passed()) / double(entries.size()); }
};

inline double relative_error(double a, double b) {
  const double denom = std::max(std::abs(a), std::abs(b));
  return denom == 0.0 ? 0.0 : std::abs(a - b) / denom;
}

/// Central-difference gradient of `loss` with respect to every coordinate of
/// `params`. `params` is perturbed in place and restored.
inline std::vector<double> finite_diff(const std::function<double()>& loss, std::span<double> params,
                                       double h = 1e-4) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double x0 = params[i];
    params[i] = x0 + h;
    const double fp = loss();
    params[i] = x0 - h;
    const double fm = loss();
    params[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Central differences of `loss` with respect to params[index] for each index,
/// compared against `analytic[index]`.
inline GradCheckReport check_gradient(std::span<double> params, std::span<const double> analytic,
                                      const std::function<double()>& loss, std::span<const std::size_t> indices,
                                      double step = 1e-6, double rel_tol = 1e-3, double abs_tol = 1e-9) {
  GradCheckReport rep;
  const double f0 = loss();
  for (std::size_t idx : indices) {
    const double x0 = params[idx];
    const double h = step * std::max(1.0, std::abs(x0));
    params[idx] = x0 + h;
    const double fp = loss();
    params[idx] = x0 - h;
    const double fm = loss();
    params[idx] = x0;
    GradCheckEntry e;
    e.index = idx;
    e.analytic = analytic[idx];
    e.numeric = (fp - fm) / (2.0 * h);
    e.rel_error = relative_error(e.analytic, e.numeric);
    e.passed = e.rel_error <= rel_tol || std::abs(e.analytic - e.numeric) <= abs_tol;
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    e.near_boundary = relative_error(fwd, bwd) > 0.1 && std::abs(fwd - bwd) > 1e-6;
    rep.entries.push_back(e);
  }
  return rep;
}

}  // namespace blendsplat::oracle
