// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

namespace blendsplat {

template <class T>
using Vec2 = Eigen::Matrix<T, 2, 1>;
template <class T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <class T>
using Vec4 = Eigen::Matrix<T, 4, 1>;
template <class T>
using Mat2 = Eigen::Matrix<T, 2, 2>;
template <class T>
using Mat3 = Eigen::Matrix<T, 3, 3>;

/// Quaternions are stored (w, x, y, z).
template <class T>
Vec4<T> quat_identity() {
  return Vec4<T>(T(1), T(0), T(0), T(0));
}

template <class T>
Vec4<T> quat_normalized(const Vec4<T>& q) {
  return q / q.norm();
}

/// Adjoint of q -> q / |q|.
template <class T>
Vec4<T> quat_normalize_backward(const Vec4<T>& q, const Vec4<T>& d_unit) {
  const T n = q.norm();
  const Vec4<T> u = q / n;
  return (d_unit - u * u.dot(d_unit)) / n;
}

/// Rotation matrix of a unit quaternion.
template <class T>
Mat3<T> quat_to_matrix(const Vec4<T>& q) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3<T> r;
  r << T(1) - T(2) * (y * y + z * z), T(2) * (x * y - w * z), T(2) * (x * z + w * y),
      T(2) * (x * y + w * z), T(1) - T(2) * (x * x + z * z), T(2) * (y * z - w * x),
      T(2) * (x * z - w * y), T(2) * (y * z + w * x), T(1) - T(2) * (x * x + y * y);
  return r;
}

/// Adjoint of quat_to_matrix for a unit quaternion (no normalization).
template <class T>
Vec4<T> quat_to_matrix_backward(const Vec4<T>& q, const Mat3<T>& dr) {
  const T w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4<T> dq;
  dq[0] = T(2) * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) - y * dr(2, 0) + x * dr(2, 1));
  dq[1] = T(2) * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - T(2) * x * dr(1, 1) - w * dr(1, 2) +
                  z * dr(2, 0) + w * dr(2, 1) - T(2) * x * dr(2, 2));
  dq[2] = T(2) * (-T(2) * y * dr(0, 0) + x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) + z * dr(1, 2) -
                  w * dr(2, 0) + z * dr(2, 1) - T(2) * y * dr(2, 2));
  dq[3] = T(2) * (-T(2) * z * dr(0, 0) - w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) - T(2) * z * dr(1, 1) +
                  y * dr(1, 2) + x * dr(2, 0) + y * dr(2, 1));
  return dq;
}

/// Hamilton product a*b; the rotation of the product is R(a) R(b).
template <class T>
Vec4<T> quat_mul(const Vec4<T>& a, const Vec4<T>& b) {
  return Vec4<T>(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                 a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                 a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                 a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

/// Adjoint of quat_mul: returns (d_a, d_b).
template <class T>
std::array<Vec4<T>, 2> quat_mul_backward(const Vec4<T>& a, const Vec4<T>& b, const Vec4<T>& d) {
  // Product is bilinear: out = L(a) b = R(b) a.
  Eigen::Matrix<T, 4, 4> left, right;
  left << a[0], -a[1], -a[2], -a[3],
          a[1], a[0], -a[3], a[2],
          a[2], a[3], a[0], -a[1],
          a[3], -a[2], a[1], a[0];
  right << b[0], -b[1], -b[2], -b[3],
           b[1], b[0], b[3], -b[2],
           b[2], -b[3], b[0], b[1],
           b[3], b[2], -b[1], b[0];
  return {right.transpose() * d, left.transpose() * d};
}

template <class T>
Vec4<T> quat_from_axis_angle(const Vec3<T>& axis, T angle) {
  const Vec3<T> a = axis.normalized() * std::sin(angle / T(2));
  return Vec4<T>(std::cos(angle / T(2)), a[0], a[1], a[2]);
}

/// World covariance R S S^T R^T with S = diag(exp(log_scale)); the quaternion
/// is normalized internally.
template <class T>
Mat3<T> compute_cov3d(const Vec4<T>& rot, const Vec3<T>& log_scale) {
  const Mat3<T> r = quat_to_matrix(quat_normalized(rot));
  const Mat3<T> m = r * log_scale.array().exp().matrix().asDiagonal();
  Mat3<T> cov = m * m.transpose();
  // Exact symmetry regardless of summation order.
  return T(0.5) * (cov + cov.transpose());
}

template <class T>
struct Cov3dGrad {
  Vec4<T> d_rot;
  Vec3<T> d_log_scale;
};

/// Adjoint of compute_cov3d for a symmetric upstream gradient d_cov.
template <class T>
Cov3dGrad<T> compute_cov3d_backward(const Vec4<T>& rot, const Vec3<T>& log_scale, const Mat3<T>& d_cov) {
  const Vec4<T> unit = quat_normalized(rot);
  const Mat3<T> r = quat_to_matrix(unit);
  const Vec3<T> s = log_scale.array().exp().matrix();
  const Mat3<T> m = r * s.asDiagonal();
  const Mat3<T> dm = T(2) * d_cov * m;
  Cov3dGrad<T> g;
  Mat3<T> dr;
  for (int k = 0; k < 3; ++k) {
    g.d_log_scale[k] = r.col(k).dot(dm.col(k)) * s[k];
    dr.col(k) = dm.col(k) * s[k];
  }
  g.d_rot = quat_normalize_backward(rot, quat_to_matrix_backward(unit, dr));
  return g;
}

}  // namespace blendsplat
