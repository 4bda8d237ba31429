// Copyright Contributors to the nerfin Project
// SPDX-License-Identifier: Apache-2.0

#include "nerfin/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace nerfin {

namespace {

void on_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_warning(png_structp, png_const_charp) {}

void write_bytes(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<Bytes*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void flush_bytes(png_structp) {}

struct Source {
  const Bytes* data;
  std::size_t pos;
};

void read_bytes(png_structp png, png_bytep dst, png_size_t n) {
  auto* src = static_cast<Source*>(png_get_io_ptr(png));
  if (src->pos + n > src->data->size()) png_error(png, "unexpected end of data");
  std::memcpy(dst, src->data->data() + src->pos, n);
  src->pos += n;
}

}  // namespace

Bytes encode_png(const PngPixels& px) {
  if (px.width <= 0 || px.height <= 0 || (px.channels != 1 && px.channels != 3)) {
    throw std::invalid_argument("encode_png: bad image geometry");
  }
  if (px.bit_depth != 1 && px.bit_depth != 8 && px.bit_depth != 16) {
    throw std::invalid_argument("encode_png: unsupported bit depth");
  }
  const std::size_t row_samples = static_cast<std::size_t>(px.width) * px.channels;
  if (px.samples.size() != row_samples * px.height) throw std::invalid_argument("encode_png: sample count mismatch");

  std::string err;
  Bytes out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("encode_png: libpng initialisation failed");
  }
  // rows are built before setjmp so no object with a destructor is live across longjmp
  std::vector<Bytes> rows(px.height);
  for (int y = 0; y < px.height; ++y) {
    Bytes& row = rows[y];
    const std::uint16_t* s = px.samples.data() + row_samples * y;
    if (px.bit_depth == 16) {
      row.resize(row_samples * 2);
      for (std::size_t i = 0; i < row_samples; ++i) {
        row[2 * i] = static_cast<std::uint8_t>(s[i] >> 8);
        row[2 * i + 1] = static_cast<std::uint8_t>(s[i] & 0xff);
      }
    } else if (px.bit_depth == 8) {
      row.resize(row_samples);
      for (std::size_t i = 0; i < row_samples; ++i) row[i] = static_cast<std::uint8_t>(s[i]);
    } else {
      row.assign((row_samples + 7) / 8, 0);
      for (std::size_t i = 0; i < row_samples; ++i) {
        if (s[i]) row[i / 8] |= static_cast<std::uint8_t>(0x80 >> (i % 8));
      }
    }
  }
  std::vector<png_bytep> pointers(px.height);
  for (int y = 0; y < px.height; ++y) pointers[y] = rows[y].data();

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("encode_png: " + err);
  }
  png_set_write_fn(png, &out, write_bytes, flush_bytes);
  png_set_IHDR(png, info, px.width, px.height, px.bit_depth, px.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, pointers.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

PngPixels decode_png(const Bytes& data) {
  if (data.size() < 8 || png_sig_cmp(data.data(), 0, 8) != 0) throw std::invalid_argument("decode_png: not a PNG");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_error, on_warning);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png: libpng initialisation failed");
  }
  Source src{&data, 0};
  PngPixels px;
  Bytes buffer;
  std::vector<png_bytep> pointers;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::invalid_argument("decode_png: " + err);
  }
  png_set_read_fn(png, &src, read_bytes);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  px.width = static_cast<int>(png_get_image_width(png, info));
  px.height = static_cast<int>(png_get_image_height(png, info));
  px.channels = png_get_channels(png, info);
  depth = png_get_bit_depth(png, info);
  px.bit_depth = depth;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer.resize(rowbytes * px.height);
  pointers.resize(px.height);
  for (int y = 0; y < px.height; ++y) pointers[y] = buffer.data() + rowbytes * y;
  png_read_image(png, pointers.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (px.channels != 1 && px.channels != 3) throw std::invalid_argument("decode_png: unsupported channel layout");
  const std::size_t n = static_cast<std::size_t>(px.width) * px.height * px.channels;
  px.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    px.samples[i] = depth == 16 ? static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]) : buffer[i];
  }
  return px;
}

Bytes encode_rgb_png(const RgbImage& image) {
  PngPixels px{image.width, image.height, 3, 8, {}};
  px.samples.resize(static_cast<std::size_t>(image.pixels.size()));
  for (Index i = 0; i < image.pixels.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const float v = std::clamp(image.pixels(i, c), 0.f, 1.f);
      px.samples[3 * i + c] = static_cast<std::uint16_t>(std::lround(v * 255.f));
    }
  }
  return encode_png(px);
}

RgbImage decode_rgb_png(const Bytes& data) {
  const PngPixels px = decode_png(data);
  RgbImage img(px.width, px.height);
  const float scale = px.bit_depth == 16 ? 65535.f : 255.f;
  for (Index i = 0; i < img.pixels.rows(); ++i) {
    for (int c = 0; c < 3; ++c) {
      const std::uint16_t s = px.channels == 3 ? px.samples[3 * i + c] : px.samples[i];
      img.pixels(i, c) = static_cast<float>(s) / scale;
    }
  }
  return img;
}

Bytes encode_mask_png(const Mask& mask) {
  PngPixels px{static_cast<int>(mask.cols()), static_cast<int>(mask.rows()), 1, 1, {}};
  px.samples.resize(static_cast<std::size_t>(mask.size()));
  for (Index i = 0; i < mask.size(); ++i) px.samples[i] = mask.data()[i] ? 1 : 0;
  return encode_png(px);
}

Mask decode_mask_png(const Bytes& data) {
  const PngPixels px = decode_png(data);
  Mask m(px.height, px.width);
  const std::uint32_t half = px.bit_depth == 16 ? 32768 : 128;
  for (Index i = 0; i < m.size(); ++i) {
    std::uint32_t v = 0;
    if (px.channels == 3) {
      v = (px.samples[3 * i] + px.samples[3 * i + 1] + px.samples[3 * i + 2]) / 3;
    } else {
      v = px.samples[i];
    }
    m.data()[i] = v >= half ? 1 : 0;
  }
  return m;
}

Bytes encode_depth_png(const DepthMap& depth, double scale) {
  PngPixels px{static_cast<int>(depth.cols()), static_cast<int>(depth.rows()), 1, 16, {}};
  px.samples.resize(static_cast<std::size_t>(depth.size()));
  for (Index i = 0; i < depth.size(); ++i) {
    const double v = std::clamp(std::round(double(depth.data()[i]) * scale), 0.0, 65535.0);
    px.samples[i] = static_cast<std::uint16_t>(v);
  }
  return encode_png(px);
}

DepthMap decode_depth_png(const Bytes& data, double scale) {
  const PngPixels px = decode_png(data);
  if (px.channels != 1) throw std::invalid_argument("decode_depth_png: expected a grayscale PNG");
  DepthMap d(px.height, px.width);
  for (Index i = 0; i < d.size(); ++i) d.data()[i] = static_cast<float>(px.samples[i] / scale);
  return d;
}

Bytes encode_depth_preview_png(const DepthMap& depth, double lo, double hi) {
  PngPixels px{static_cast<int>(depth.cols()), static_cast<int>(depth.rows()), 1, 8, {}};
  px.samples.resize(static_cast<std::size_t>(depth.size()));
  const double span = hi > lo ? hi - lo : 1.0;
  for (Index i = 0; i < depth.size(); ++i) {
    const double u = std::clamp((double(depth.data()[i]) - lo) / span, 0.0, 1.0);
    px.samples[i] = static_cast<std::uint16_t>(std::lround(255.0 * (1.0 - u)));
  }
  return encode_png(px);
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace nerfin
