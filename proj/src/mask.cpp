// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/mask.hpp"

#include <cmath>
#include <stdexcept>

namespace nerfin {

namespace {

void check_depth(const DepthMap& d, const CameraPose& pose, const char* what) {
  if (d.rows() != pose.height || d.cols() != pose.width) {
    throw ShapeError(std::string("transfer_mask: ") + what + " depth is " + shape_string(shape_of(d)) +
                     ", pose is " + std::to_string(pose.height) + "x" + std::to_string(pose.width));
  }
}

// 0-region grown by a square of half-size r (as_zero) or shrunk by it.
Mask square_filter(const Mask& m, int r, bool grow) {
  const int h = static_cast<int>(m.rows()), w = static_cast<int>(m.cols());
  Mask out = m;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any_zero = false, all_zero = true;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          const bool zero = m(yy, xx) == 0;
          any_zero = any_zero || zero;
          all_zero = all_zero && zero;
        }
      }
      out(y, x) = grow ? (any_zero ? 0 : 1) : (all_zero ? 0 : 1);
    }
  }
  return out;
}

}  // namespace

void TransferOptions::validate() const {
  if (!(rel_tolerance >= 0) || !(abs_tolerance >= 0)) throw std::invalid_argument("transfer: tolerances must be >= 0");
  if (!(splat_radius > 0)) throw std::invalid_argument("transfer: splat_radius must be > 0");
  if (closing_radius < 0 || dilation < 0) throw std::invalid_argument("transfer: radii must be >= 0");
}

Mask dilate_mask(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const int h = static_cast<int>(mask.rows()), w = static_cast<int>(mask.cols());
  Mask out = mask;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask(y, x) != 0) continue;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (dx * dx + dy * dy > radius * radius || yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          out(yy, xx) = 0;
        }
      }
    }
  }
  return out;
}

Mask close_mask(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  return square_filter(square_filter(mask, radius, true), radius, false);
}

double mask_iou(const Mask& a, const Mask& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("mask_iou: " + shape_string(shape_of(a)) + " vs " + shape_string(shape_of(b)));
  }
  const Index inter = ((a == 0) && (b == 0)).count();
  const Index uni = ((a == 0) || (b == 0)).count();
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

TransferResult transfer_mask(const Mask& user_mask, const CameraPose& user_pose, const DepthMap& user_depth,
                             const CameraPose& target_pose, const DepthMap& target_depth,
                             const TransferOptions& options) {
  options.validate();
  if (user_mask.rows() != user_pose.height || user_mask.cols() != user_pose.width) {
    throw ShapeError("transfer_mask: user mask is " + shape_string(shape_of(user_mask)) + ", pose is " +
                     std::to_string(user_pose.height) + "x" + std::to_string(user_pose.width));
  }
  check_depth(user_depth, user_pose, "user");
  check_depth(target_depth, target_pose, "target");
  const int w = target_pose.width, h = target_pose.height;
  TransferResult result;
  Mask splat = Mask::Ones(h, w);
  Index in_front = 0;
  const int reach = static_cast<int>(std::ceil(options.splat_radius));
  for (int y = 0; y < user_pose.height; ++y) {
    for (int x = 0; x < user_pose.width; ++x) {
      if (user_mask(y, x) != 0) continue;
      const Vec3 p = user_pose.unproject(x + 0.5, y + 0.5, user_depth(y, x));
      const auto uv = target_pose.project(p);
      if (!uv) continue;
      ++in_front;
      const double range = target_pose.range_to(p);
      const double tol = options.rel_tolerance * range + options.abs_tolerance;
      const int bx = static_cast<int>(std::floor(uv->x())), by = static_cast<int>(std::floor(uv->y()));
      bool hit = false;
      for (int yy = by - reach; yy <= by + reach; ++yy) {
        for (int xx = bx - reach; xx <= bx + reach; ++xx) {
          if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
          const double dx = xx + 0.5 - uv->x(), dy = yy + 0.5 - uv->y();
          if (dx * dx + dy * dy >= options.splat_radius * options.splat_radius) continue;
          if (std::abs(double(target_depth(yy, xx)) - range) > tol) continue;
          splat(yy, xx) = 0;
          hit = true;
        }
      }
      if (hit) ++result.landed;
    }
  }
  if (masked_count(user_mask) > 0 && in_front == 0) {
    result.mask = Mask::Ones(h, w);
    result.degenerate = true;
    return result;
  }
  result.mask = dilate_mask(close_mask(splat, options.closing_radius), options.dilation);
  return result;
}

}  // namespace nerfin
