// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Lossless PNG encode/decode for the image types, in memory or on disk.

#include "nerfin/image.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nerfin {

using Bytes = std::vector<std::uint8_t>;

/// Raw decoded pixels: height rows of width * channels samples, 8 or 16 bits.
struct PngPixels {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

Bytes encode_png(const PngPixels& px);
/// Decodes to 1 (gray) or 3 (rgb) channels; alpha is dropped, palettes expanded.
PngPixels decode_png(const Bytes& data);

Bytes encode_rgb_png(const RgbImage& image);
RgbImage decode_rgb_png(const Bytes& data);

/// 1-bit grayscale: 0 = masked, 1 = keep.
Bytes encode_mask_png(const Mask& mask);
/// Any gray or rgb PNG; samples at or above half scale keep the pixel.
Mask decode_mask_png(const Bytes& data);

/// 16-bit grayscale holding round(value * scale), clamped to the u16 range.
Bytes encode_depth_png(const DepthMap& depth, double scale);
DepthMap decode_depth_png(const Bytes& data, double scale);

/// 8-bit grayscale of depth mapped linearly from [lo, hi] to [255, 0].
Bytes encode_depth_preview_png(const DepthMap& depth, double lo, double hi);

Bytes read_file(const std::string& path);
void write_file(const std::string& path, const Bytes& data);

}  // namespace nerfin
