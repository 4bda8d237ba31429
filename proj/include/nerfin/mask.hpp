// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Geometric mask transfer between views through per-pixel ray depth.

#include "nerfin/camera.hpp"
#include "nerfin/image.hpp"

namespace nerfin {

struct TransferOptions {
  double rel_tolerance = 0.02;  ///< depth agreement, fraction of the reprojected range
  double abs_tolerance = 0.01;  ///< depth agreement, scene units
  double splat_radius = 1.0;    ///< pixels whose centres lie closer than this to a landing point are marked
  int closing_radius = 1;       ///< square structuring element half-size
  int dilation = 3;             ///< Euclidean safety margin in pixels

  void validate() const;
};

struct TransferResult {
  Mask mask;
  /// Set when the user mask is non-empty but no masked point lands in front of the target camera.
  bool degenerate = false;
  Index landed = 0;  ///< masked user pixels that reached a depth-agreeing target pixel
};

/// Marks (0) the target pixels that see the surface under the user's masked
/// pixels. Depths are distances along each pixel's ray.
TransferResult transfer_mask(const Mask& user_mask, const CameraPose& user_pose, const DepthMap& user_depth,
                             const CameraPose& target_pose, const DepthMap& target_depth,
                             const TransferOptions& options = {});

/// Grows the 0-region by a Euclidean disk of `radius` pixels.
Mask dilate_mask(const Mask& mask, int radius);

/// Morphological closing of the 0-region with a (2r+1)^2 square; pixels
/// outside the image never erode the region.
Mask close_mask(const Mask& mask, int radius);

/// Intersection over union of the 0-regions; 1 when both are empty.
double mask_iou(const Mask& a, const Mask& b);

}  // namespace nerfin
