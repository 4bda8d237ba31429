// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "nerfin/core.hpp"

#include <cstdint>

namespace nerfin {

template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Binary mask, height x width: 1 keeps a pixel, 0 marks the region to remove.
using Mask = Plane<std::uint8_t>;

/// Per-pixel ray distance, height x width.
using DepthMap = Plane<float>;

/// RGB image in [0, 1], stored as (height * width) x 3 rows in scanline order.
struct RgbImage {
  int width = 0;
  int height = 0;
  Eigen::Array<float, Eigen::Dynamic, 3, Eigen::RowMajor> pixels;

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(Eigen::Array<float, Eigen::Dynamic, 3, Eigen::RowMajor>::Zero(
                                                          static_cast<Index>(w) * h, 3)) {}

  Index index(int x, int y) const { return static_cast<Index>(y) * width + x; }
  auto at(int x, int y) { return pixels.row(index(x, y)); }
  auto at(int x, int y) const { return pixels.row(index(x, y)); }

  bool operator==(const RgbImage& o) const {
    return width == o.width && height == o.height && (pixels == o.pixels).all();
  }
};

inline Mask full_mask(int width, int height) { return Mask::Ones(height, width); }

/// Number of masked (0) pixels.
inline Index masked_count(const Mask& m) { return (m == 0).count(); }

}  // namespace nerfin
