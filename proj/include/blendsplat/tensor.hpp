// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "blendsplat/errors.hpp"

namespace blendsplat {

/// Dense row-major 2-D array. Per-Gaussian parameters use one row per
/// Gaussian; a zero-column tensor is a valid "unused" slot.
template <class T>
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  bool empty() const noexcept { return data.empty(); }

  T* row_ptr(std::size_t r) noexcept { return data.data() + r * cols; }
  const T* row_ptr(std::size_t r) const noexcept { return data.data() + r * cols; }
  std::span<T> row(std::size_t r) noexcept { return {row_ptr(r), cols}; }
  std::span<const T> row(std::size_t r) const noexcept { return {row_ptr(r), cols}; }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data[r * cols + c]; }

  void resize(std::size_t r, std::size_t c, T fill = T(0)) {
    rows = r;
    cols = c;
    data.assign(r * c, fill);
  }
  void set_zero() { std::fill(data.begin(), data.end(), T(0)); }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(rows, cols);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
  }
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.rows, t.cols);
}

/// Gathers rows by index; `-1` entries produce zero rows.
template <class T>
Tensor<T> gather_rows(const Tensor<T>& src, std::span<const long> index) {
  Tensor<T> out(index.size(), src.cols);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0) continue;
    std::copy_n(src.row_ptr(static_cast<std::size_t>(index[i])), src.cols, out.row_ptr(i));
  }
  return out;
}

/// Row-major interleaved RGB image.
template <class T = float>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int w, int h, T fill = T(0)) : width(w), height(h), pixels(std::size_t(3) * w * h, fill) {}

  std::size_t pixel_count() const noexcept { return std::size_t(width) * height; }
  T* at(int x, int y) noexcept { return pixels.data() + 3 * (std::size_t(y) * width + x); }
  const T* at(int x, int y) const noexcept { return pixels.data() + 3 * (std::size_t(y) * width + x); }

  bool all_finite() const {
    return std::all_of(pixels.begin(), pixels.end(), [](T v) { return std::isfinite(v); });
  }

  template <class U>
  Image<U> cast() const {
    Image<U> out(width, height);
    std::transform(pixels.begin(), pixels.end(), out.pixels.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.width == b.width && a.height == b.height && a.pixels == b.pixels;
  }
};

template <class A, class B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
  if (a.width != b.width || a.height != b.height || a.pixels.size() != b.pixels.size()) {
    throw ShapeError(std::string(what) + ": image shapes differ (" + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height) + ")");
  }
}

}  // namespace blendsplat
