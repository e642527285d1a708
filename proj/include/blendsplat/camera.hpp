// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "blendsplat/errors.hpp"
#include "blendsplat/geometry.hpp"

namespace blendsplat {

/// Pinhole camera. Camera space follows the OpenCV convention: +z forward,
/// +x right, +y down. Pixel (i, j) has its center at (i + 0.5, j + 0.5).
struct Camera {
  Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;
  double znear = 0.01, zfar = 100.0;

  Eigen::Matrix3d rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_cam.topRightCorner<3, 1>(); }
  Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

  /// Throws ConfigError when the camera invariants do not hold.
  void validate() const {
    const Eigen::Matrix3d r = rotation();
    if ((r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-5 ||
        std::abs(r.determinant() - 1.0) > 1e-5) {
      throw ConfigError("camera rotation is not orthonormal with det +1");
    }
    if (!(znear > 0) || !(zfar > znear)) throw ConfigError("camera requires 0 < znear < zfar");
    if (width < 8 || height < 8) throw ConfigError("camera resolution must be at least 8x8");
    if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera focal lengths must be positive");
  }

  std::array<double, 16> matrix_row_major() const {
    std::array<double, 16> out{};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) out[r * 4 + c] = world_to_cam(r, c);
    return out;
  }

  /// Same pose and field of view at a new resolution.
  Camera resized(int w, int h) const {
    Camera c = *this;
    const double sx = double(w) / width, sy = double(h) / height;
    c.fx *= sx;
    c.fy *= sy;
    c.cx *= sx;
    c.cy *= sy;
    c.width = w;
    c.height = h;
    return c;
  }
};

/// Builds a camera looking from `eye` toward `target`; `fov_y_deg` is the
/// vertical field of view and the principal point sits at the image center.
inline Camera look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                      double fov_y_deg, int width, int height) {
  const Eigen::Vector3d forward = (target - eye).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) throw ConfigError("look_at: up vector parallel to viewing direction");
  right.normalize();
  // Camera +y points down in the image.
  const Eigen::Vector3d down = forward.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = forward.transpose();
  Camera cam;
  cam.world_to_cam.setIdentity();
  cam.world_to_cam.topLeftCorner<3, 3>() = r;
  cam.world_to_cam.topRightCorner<3, 1>() = -r * eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y_deg * std::numbers::pi / 180.0);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

}  // namespace blendsplat
