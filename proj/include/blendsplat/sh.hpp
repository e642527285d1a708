// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <span>

#include "blendsplat/errors.hpp"
#include "blendsplat/geometry.hpp"

namespace blendsplat {

// Real SH normalization constants with the Condon-Shortley phase folded in,
// in the band order used by the coefficient layout.
namespace sh_constants {
inline constexpr double kC0 = 0.28209479177387814;
inline constexpr double kC1 = 0.4886025119029199;
inline constexpr std::array<double, 5> kC2{1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                           -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> kC3{-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                           -0.5900435899266435};
}  // namespace sh_constants

inline constexpr double kShColorOffset = 0.5;

/// Basis values Y_i(dir) for i < (degree+1)^2 and, optionally, their partial
/// derivatives with respect to the (unnormalized) direction components.
template <class T>
void sh_basis(int degree, const Vec3<T>& d, std::array<T, 16>& y, std::array<Vec3<T>, 16>* grad = nullptr) {
  using namespace sh_constants;
  if (degree < 0 || degree > 3) throw UnsupportedDegree(degree);
  const T x = d[0], yy = d[1], z = d[2];
  const T c1 = T(kC1);
  y[0] = T(kC0);
  if (grad) (*grad)[0].setZero();
  if (degree < 1) return;
  y[1] = -c1 * yy;
  y[2] = c1 * z;
  y[3] = -c1 * x;
  if (grad) {
    (*grad)[1] = Vec3<T>(0, -c1, 0);
    (*grad)[2] = Vec3<T>(0, 0, c1);
    (*grad)[3] = Vec3<T>(-c1, 0, 0);
  }
  if (degree < 2) return;
  const T xx = x * x, y2 = yy * yy, zz = z * z;
  const T xy = x * yy, yz = yy * z, xz = x * z;
  y[4] = T(kC2[0]) * xy;
  y[5] = T(kC2[1]) * yz;
  y[6] = T(kC2[2]) * (T(2) * zz - xx - y2);
  y[7] = T(kC2[3]) * xz;
  y[8] = T(kC2[4]) * (xx - y2);
  if (grad) {
    (*grad)[4] = T(kC2[0]) * Vec3<T>(yy, x, 0);
    (*grad)[5] = T(kC2[1]) * Vec3<T>(0, z, yy);
    (*grad)[6] = T(kC2[2]) * Vec3<T>(-T(2) * x, -T(2) * yy, T(4) * z);
    (*grad)[7] = T(kC2[3]) * Vec3<T>(z, 0, x);
    (*grad)[8] = T(kC2[4]) * Vec3<T>(T(2) * x, -T(2) * yy, 0);
  }
  if (degree < 3) return;
  y[9] = T(kC3[0]) * yy * (T(3) * xx - y2);
  y[10] = T(kC3[1]) * xy * z;
  y[11] = T(kC3[2]) * yy * (T(4) * zz - xx - y2);
  y[12] = T(kC3[3]) * z * (T(2) * zz - T(3) * xx - T(3) * y2);
  y[13] = T(kC3[4]) * x * (T(4) * zz - xx - y2);
  y[14] = T(kC3[5]) * z * (xx - y2);
  y[15] = T(kC3[6]) * x * (xx - T(3) * y2);
  if (grad) {
    (*grad)[9] = T(kC3[0]) * Vec3<T>(T(6) * xy, T(3) * xx - T(3) * y2, 0);
    (*grad)[10] = T(kC3[1]) * Vec3<T>(yz, xz, xy);
    (*grad)[11] = T(kC3[2]) * Vec3<T>(-T(2) * xy, T(4) * zz - xx - T(3) * y2, T(8) * yz);
    (*grad)[12] = T(kC3[3]) * Vec3<T>(-T(6) * xz, -T(6) * yz, T(6) * zz - T(3) * xx - T(3) * y2);
    (*grad)[13] = T(kC3[4]) * Vec3<T>(T(4) * zz - T(3) * xx - y2, -T(2) * xy, T(8) * xz);
    (*grad)[14] = T(kC3[5]) * Vec3<T>(T(2) * xz, -T(2) * yz, xx - y2);
    (*grad)[15] = T(kC3[6]) * Vec3<T>(T(3) * xx - T(3) * y2, -T(6) * xy, 0);
  }
}

/// Sum of coefficients times basis, before the color offset. Coefficients are
/// RGB-interleaved: coeffs[3 * i + channel].
template <class T>
Vec3<T> eval_sh_raw(std::span<const T> coeffs, const Vec3<T>& dir, int degree) {
  std::array<T, 16> y;
  sh_basis(degree, dir, y);
  const int n = (degree + 1) * (degree + 1);
  if (coeffs.size() < std::size_t(3 * n)) throw ShapeError("eval_sh: too few coefficients for degree");
  Vec3<T> rgb = Vec3<T>::Zero();
  for (int i = 0; i < n; ++i) {
    rgb[0] += coeffs[3 * i] * y[i];
    rgb[1] += coeffs[3 * i + 1] * y[i];
    rgb[2] += coeffs[3 * i + 2] * y[i];
  }
  return rgb;
}

/// View-dependent color: raw SH sum plus 0.5, clamped below at zero.
template <class T>
Vec3<T> eval_sh(std::span<const T> coeffs, const Vec3<T>& dir, int degree) {
  const Vec3<T> raw = eval_sh_raw(coeffs, dir, degree);
  return (raw.array() + T(kShColorOffset)).cwiseMax(T(0)).matrix();
}

/// Adjoint of eval_sh given the upstream color gradient. Writes coefficient
/// gradients (overwrite) and returns the gradient with respect to `dir`.
template <class T>
Vec3<T> eval_sh_backward(std::span<const T> coeffs, const Vec3<T>& dir, int degree, const Vec3<T>& d_rgb,
                         std::span<T> d_coeffs) {
  std::array<T, 16> y;
  std::array<Vec3<T>, 16> dy;
  sh_basis(degree, dir, y, &dy);
  const int n = (degree + 1) * (degree + 1);
  const Vec3<T> raw = eval_sh_raw(coeffs, dir, degree);
  Vec3<T> g = d_rgb;
  for (int c = 0; c < 3; ++c) {
    if (raw[c] + T(kShColorOffset) < T(0)) g[c] = T(0);
  }
  Vec3<T> d_dir = Vec3<T>::Zero();
  for (int i = 0; i < n; ++i) {
    d_coeffs[3 * i] = g[0] * y[i];
    d_coeffs[3 * i + 1] = g[1] * y[i];
    d_coeffs[3 * i + 2] = g[2] * y[i];
    const T w = g[0] * coeffs[3 * i] + g[1] * coeffs[3 * i + 1] + g[2] * coeffs[3 * i + 2];
    d_dir += w * dy[i];
  }
  return d_dir;
}

}  // namespace blendsplat
