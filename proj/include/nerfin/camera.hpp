// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfin/core.hpp"

#include <optional>

namespace nerfin {

/// A world-space ray with unit direction.
struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double t) const { return origin + t * direction; }
};

/// Pinhole camera. Camera frame is x right, y down, z forward; `rotation`
/// maps camera axes to world axes. Pixel (x, y) covers [x, x+1) x [y, y+1).
struct CameraPose {
  Vec3 position = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  double focal = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  Vec3 forward() const { return rotation.col(2); }

  /// Unit world-space direction through continuous pixel coordinates.
  Vec3 direction(double px, double py) const {
    const Vec3 cam((px - cx) / focal, (py - cy) / focal, 1.0);
    return (rotation * cam).normalized();
  }

  Ray pixel_ray(int x, int y) const { return {position, direction(x + 0.5, y + 0.5)}; }

  /// Point at distance `range` along the ray through (px, py).
  Vec3 unproject(double px, double py, double range) const { return position + range * direction(px, py); }

  /// Continuous pixel coordinates of a world point, if it lies in front of the camera.
  std::optional<Eigen::Vector2d> project(const Vec3& world) const {
    const Vec3 cam = rotation.transpose() * (world - position);
    if (cam.z() <= 1e-9) return std::nullopt;
    return Eigen::Vector2d(focal * cam.x() / cam.z() + cx, focal * cam.y() / cam.z() + cy);
  }

  /// Distance from the camera centre to a world point.
  double range_to(const Vec3& world) const { return (world - position).norm(); }

  bool valid() const {
    const double orth = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    return focal > 0 && width > 0 && height > 0 && orth < 1e-6 && std::abs(rotation.determinant() - 1.0) < 1e-6;
  }
};

/// Camera at `position` looking at `target`, with `up` roughly upward in the image.
CameraPose look_at(const Vec3& position, const Vec3& target, const Vec3& up, double focal, int width, int height);

}  // namespace nerfin
