// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "blendsplat/errors.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}
inline void png_warning_fn(png_structp, png_const_charp) {}

}  // namespace detail

/// Reads an 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA, palette) into
/// linear [0, 1] RGB. Alpha is dropped.
inline Image<float> read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw LoadError(path);
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw LoadError(path, "not a PNG file");
  }
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw LoadError(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buf;
  Image<float> img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError(path, "corrupt PNG: " + err);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host order on little-endian machines
  png_read_update_info(png, info);
  const int w = int(png_get_image_width(png, info));
  const int h = int(png_get_image_height(png, info));
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buf.resize(rowbytes * h);
  rows.resize(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + rowbytes * y;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image<float>(w, h);
  if (out_depth == 16) {
    for (int y = 0; y < h; ++y) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(rows[y]);
      for (int i = 0; i < 3 * w; ++i) img.pixels[std::size_t(3) * w * y + i] = float(row[i]) / 65535.0f;
    }
  } else {
    for (int y = 0; y < h; ++y)
      for (int i = 0; i < 3 * w; ++i) img.pixels[std::size_t(3) * w * y + i] = float(rows[y][i]) / 255.0f;
  }
  return img;
}

/// Quantizes to the PNG bit depth (round to nearest, clamped to [0, 1]).
template <class T>
std::vector<std::uint16_t> quantize(const Image<T>& img, int bit_depth) {
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  std::vector<std::uint16_t> q(img.pixels.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double v = std::clamp(double(img.pixels[i]), 0.0, 1.0);
    q[i] = static_cast<std::uint16_t>(std::lround(v * maxv));
  }
  return q;
}

/// Rounds an image to the values a PNG of `bit_depth` can store exactly.
template <class T>
Image<T> quantized_copy(const Image<T>& img, int bit_depth) {
  const auto q = quantize(img, bit_depth);
  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  Image<T> out(img.width, img.height);
  for (std::size_t i = 0; i < q.size(); ++i) out.pixels[i] = T(float(q[i]) / float(maxv));
  return out;
}

template <class T>
void write_png(const std::string& path, const Image<T>& img, int bit_depth = 8) {
  if (bit_depth != 8 && bit_depth != 16) throw Error("write_png: bit depth must be 8 or 16");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw LoadError(path, "cannot open for writing");
  const auto q = quantize(img, bit_depth);
  const int w = img.width, h = img.height;
  const std::size_t stride = std::size_t(3) * w * (bit_depth / 8);
  std::vector<unsigned char> buf(stride * h);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (bit_depth == 16) {
      buf[2 * i] = static_cast<unsigned char>(q[i] >> 8);  // PNG stores big-endian samples
      buf[2 * i + 1] = static_cast<unsigned char>(q[i] & 0xff);
    } else {
      buf[i] = static_cast<unsigned char>(q[i]);
    }
  }
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, detail::png_error_fn, detail::png_warning_fn);
  if (!png) throw LoadError(path, "libpng init failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = buf.data() + stride * y;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw LoadError(path, "PNG write failed: " + err);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, png_uint_32(w), png_uint_32(h), bit_depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// 8-bit RGB bytes, row-major, for streaming.
template <class T>
std::vector<std::uint8_t> to_rgb8(const Image<T>& img) {
  const auto q = quantize(img, 8);
  return std::vector<std::uint8_t>(q.begin(), q.end());
}

}  // namespace blendsplat
