// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/camera.hpp"

namespace nerfin {

CameraPose look_at(const Vec3& position, const Vec3& target, const Vec3& up, double focal, int width, int height) {
  const Vec3 forward = (target - position).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  CameraPose pose;
  pose.position = position;
  pose.rotation.col(0) = right;
  pose.rotation.col(1) = down;
  pose.rotation.col(2) = forward;
  pose.focal = focal;
  pose.width = width;
  pose.height = height;
  pose.cx = width / 2.0;
  pose.cy = height / 2.0;
  return pose;
}

}  // namespace nerfin
