// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "blendsplat/errors.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr double kPsnrCap = 100.0;

namespace detail {

inline std::array<double, kSsimWindow> ssim_kernel() {
  std::array<double, kSsimWindow> k{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    k[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable Gaussian filter of one plane, zero padded, same size. The kernel
/// is symmetric, so this is also its own adjoint.
template <class T>
void gaussian_filter(const std::vector<T>& in, int w, int h, std::vector<T>& out) {
  static const auto k = ssim_kernel();
  constexpr int r = kSsimWindow / 2;
  std::vector<T> tmp(in.size(), T(0));
  out.assign(in.size(), T(0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T acc = 0;
      for (int j = -r; j <= r; ++j) {
        const int xx = x + j;
        if (xx >= 0 && xx < w) acc += T(k[j + r]) * in[std::size_t(y) * w + xx];
      }
      tmp[std::size_t(y) * w + x] = acc;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      T acc = 0;
      for (int j = -r; j <= r; ++j) {
        const int yy = y + j;
        if (yy >= 0 && yy < h) acc += T(k[j + r]) * tmp[std::size_t(yy) * w + x];
      }
      out[std::size_t(y) * w + x] = acc;
    }
  }
}

template <class T>
std::vector<T> channel(const Image<T>& img, int c) {
  std::vector<T> out(std::size_t(img.width) * img.height);
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = img.pixels[3 * p + c];
  return out;
}

}  // namespace detail

template <class T>
T mse(const Image<T>& a, const Image<T>& b) {
  require_same_shape(a, b, "mse");
  double acc = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = double(a.pixels[i]) - double(b.pixels[i]);
    acc += d * d;
  }
  return T(acc / double(a.pixels.size()));
}

/// PSNR for images in [0, 1], capped at 100 dB for (near) identical images.
template <class T>
double psnr(const Image<T>& a, const Image<T>& b) {
  const double m = double(mse(a, b));
  if (m < 1e-10) return kPsnrCap;
  return 10.0 * std::log10(1.0 / m);
}

template <class T>
T l1(const Image<T>& a, const Image<T>& b, Image<T>* grad = nullptr, T weight = T(1)) {
  require_same_shape(a, b, "l1");
  double acc = 0;
  const T inv_n = weight / T(a.pixels.size());
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const T d = a.pixels[i] - b.pixels[i];
    acc += std::abs(double(d));
    if (grad) grad->pixels[i] += d > T(0) ? inv_n : (d < T(0) ? -inv_n : T(0));
  }
  return T(acc / double(a.pixels.size()));
}

/// Mean SSIM over pixels and channels. When `grad` is given, adds
/// weight * d(SSIM)/d(a) into it.
template <class T>
T ssim(const Image<T>& a, const Image<T>& b, Image<T>* grad = nullptr, T weight = T(1)) {
  require_same_shape(a, b, "ssim");
  const int w = a.width, h = a.height;
  const std::size_t np = std::size_t(w) * h;
  const T c1 = T(kSsimC1), c2 = T(kSsimC2);
  const T inv_n = T(1) / T(3 * np);
  double total = 0;
  std::vector<T> x, y, xx(np), yy(np), xy(np), mx, my, mxx, myy, mxy;
  std::vector<T> dm1(np), dm2(np), dm3(np), g1, g2, g3;
  for (int c = 0; c < 3; ++c) {
    x = detail::channel(a, c);
    y = detail::channel(b, c);
    for (std::size_t p = 0; p < np; ++p) {
      xx[p] = x[p] * x[p];
      yy[p] = y[p] * y[p];
      xy[p] = x[p] * y[p];
    }
    detail::gaussian_filter(x, w, h, mx);
    detail::gaussian_filter(y, w, h, my);
    detail::gaussian_filter(xx, w, h, mxx);
    detail::gaussian_filter(yy, w, h, myy);
    detail::gaussian_filter(xy, w, h, mxy);
    for (std::size_t p = 0; p < np; ++p) {
      const T ux = mx[p], uy = my[p];
      const T sx = mxx[p] - ux * ux, sy = myy[p] - uy * uy, sxy = mxy[p] - ux * uy;
      const T a1 = T(2) * ux * uy + c1, a2 = T(2) * sxy + c2;
      const T b1 = ux * ux + uy * uy + c1, b2 = sx + sy + c2;
      const T s = a1 * a2 / (b1 * b2);
      total += double(s);
      if (grad) {
        const T d_ux = T(2) * uy * a2 / (b1 * b2) - s * T(2) * ux / b1;
        const T d_sx = -s / b2;
        const T d_sxy = T(2) * a1 / (b1 * b2);
        dm1[p] = (d_ux - T(2) * ux * d_sx - uy * d_sxy) * inv_n;
        dm2[p] = d_sx * inv_n;
        dm3[p] = d_sxy * inv_n;
      }
    }
    if (grad) {
      detail::gaussian_filter(dm1, w, h, g1);
      detail::gaussian_filter(dm2, w, h, g2);
      detail::gaussian_filter(dm3, w, h, g3);
      for (std::size_t p = 0; p < np; ++p) {
        grad->pixels[3 * p + c] += weight * (g1[p] + T(2) * x[p] * g2[p] + y[p] * g3[p]);
      }
    }
  }
  return T(total / double(3 * np));
}

/// Optional learned perceptual term. No network ships with the library, so
/// the default hook throws NotAvailable.
template <class T>
using PerceptualFn = std::function<T(const Image<T>& pred, const Image<T>& target, Image<T>* grad, T weight)>;

template <class T>
PerceptualFn<T> unavailable_perceptual() {
  return [](const Image<T>&, const Image<T>&, Image<T>*, T) -> T {
    throw NotAvailable("perceptual loss: no feature network is available in this build");
  };
}

struct LossWeights {
  double lambda_1 = 0.8;
  double lambda_ssim = 0.2;
  double lambda_p = 0.0;
  double lambda_mu = 0.01;  // motion backends only
};

template <class T>
struct LossResult {
  T total = 0, l1 = 0, ssim = 0, perceptual = 0, shift = 0;
  Image<T> grad;          // d(total)/d(pred)
  Tensor<T> grad_shift;   // d(total)/d(delta_mu), empty without a shift
};

/// Mean absolute value of a tensor; adds weight * d/dx into `grad`.
template <class T>
T mean_abs(const Tensor<T>& x, Tensor<T>* grad = nullptr, T weight = T(1)) {
  if (x.data.empty()) return T(0);
  const T inv = T(1) / T(x.data.size());
  double acc = 0;
  for (std::size_t k = 0; k < x.data.size(); ++k) {
    const T d = x.data[k];
    acc += std::abs(double(d));
    if (grad) grad->data[k] += weight * inv * (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0)));
  }
  return T(acc / double(x.data.size()));
}

/// lambda_1 * L1 + lambda_ssim * (1 - SSIM) [+ lambda_p * perceptual].
template <class T>
LossResult<T> image_loss(const Image<T>& pred, const Image<T>& target, const LossWeights& wts,
                         bool with_perceptual = false, const PerceptualFn<T>& perceptual = unavailable_perceptual<T>()) {
  require_same_shape(pred, target, "image_loss");
  LossResult<T> r;
  r.grad = Image<T>(pred.width, pred.height);
  r.l1 = l1(pred, target, &r.grad, T(wts.lambda_1));
  r.ssim = ssim(pred, target, &r.grad, T(-wts.lambda_ssim));
  r.total = T(wts.lambda_1) * r.l1 + T(wts.lambda_ssim) * (T(1) - r.ssim);
  if (with_perceptual && wts.lambda_p > 0.0) {
    r.perceptual = perceptual(pred, target, &r.grad, T(wts.lambda_p));
    r.total += T(wts.lambda_p) * r.perceptual;
  }
  return r;
}

/// image_loss plus lambda_mu * mean|delta_mu| when a predicted shift is given.
template <class T>
LossResult<T> loss_total(const Image<T>& pred, const Image<T>& target, const LossWeights& wts,
                         const Tensor<T>* delta_mu = nullptr, bool with_perceptual = false,
                         const PerceptualFn<T>& perceptual = unavailable_perceptual<T>()) {
  LossResult<T> r = image_loss(pred, target, wts, with_perceptual, perceptual);
  if (delta_mu && !delta_mu->empty()) {
    r.grad_shift = Tensor<T>(delta_mu->rows, delta_mu->cols);
    r.shift = mean_abs(*delta_mu, &r.grad_shift, T(wts.lambda_mu));
    r.total += T(wts.lambda_mu) * r.shift;
  }
  return r;
}

}  // namespace blendsplat
