// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "blendsplat/errors.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <class T>
MatrixMap<T> as_matrix(Tensor<T>& t) {
  return MatrixMap<T>(t.data.data(), Eigen::Index(t.rows), Eigen::Index(t.cols));
}
template <class T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t) {
  return ConstMatrixMap<T>(t.data.data(), Eigen::Index(t.rows), Eigen::Index(t.cols));
}

// ---------------------------------------------------------------------------
// Positional encoding: [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x),
// cos(2^(L-1) pi x)] with x the position normalized to [-1, 1]^3. Layout is
// 3 raw values, then per octave 3 sines followed by 3 cosines.

template <class T>
void encode_position(std::span<const T> mu, const std::array<T, 3>& lo, const std::array<T, 3>& hi, int octaves,
                     std::span<T> out) {
  if (out.size() != std::size_t(3 + 6 * octaves)) throw ShapeError("encode_position: output width mismatch");
  T xn[3];
  for (int a = 0; a < 3; ++a) {
    xn[a] = T(2) * (mu[a] - lo[a]) / (hi[a] - lo[a]) - T(1);
    out[a] = xn[a];
  }
  T freq = T(std::numbers::pi);
  for (int l = 0; l < octaves; ++l, freq *= T(2)) {
    for (int a = 0; a < 3; ++a) {
      out[3 + 6 * l + a] = std::sin(freq * xn[a]);
      out[3 + 6 * l + 3 + a] = std::cos(freq * xn[a]);
    }
  }
}

template <class T>
std::vector<T> encode_position(std::span<const T> mu, const std::array<T, 3>& lo, const std::array<T, 3>& hi,
                               int octaves) {
  std::vector<T> out(3 + 6 * octaves);
  encode_position(mu, lo, hi, octaves, std::span<T>(out));
  return out;
}

/// Accumulates d_mu += d(pe)/d(mu)^T d_pe.
template <class T>
void encode_position_backward(std::span<const T> mu, const std::array<T, 3>& lo, const std::array<T, 3>& hi,
                              int octaves, std::span<const T> d_pe, std::span<T> d_mu) {
  for (int a = 0; a < 3; ++a) {
    const T scale = T(2) / (hi[a] - lo[a]);
    const T xn = scale * (mu[a] - lo[a]) - T(1);
    T d_xn = d_pe[a];
    T freq = T(std::numbers::pi);
    for (int l = 0; l < octaves; ++l, freq *= T(2)) {
      d_xn += d_pe[3 + 6 * l + a] * freq * std::cos(freq * xn);
      d_xn -= d_pe[3 + 6 * l + 3 + a] * freq * std::sin(freq * xn);
    }
    d_mu[a] += d_xn * scale;
  }
}

// ---------------------------------------------------------------------------
// Batched multilayer perceptron. Layers are stored as [W0, b0, W1, b1, ...]
// with W (in x out). Every layer but the last is followed by LeakyReLU; the
// negative slope applies to pre-activations <= 0.

template <class T>
struct MlpCache {
  std::vector<Tensor<T>> inputs;  // input of each layer (post-activation of the previous)
  std::vector<Tensor<T>> pre;     // pre-activation of each hidden layer
};

template <class T>
void check_mlp_input(std::span<const Tensor<T>> layers, std::size_t width) {
  if (layers.empty() || layers.size() % 2 != 0) throw ShapeError("mlp: malformed layer list");
  if (layers[0].rows != width) {
    throw ShapeError("mlp: input width " + std::to_string(width) + " does not match layer width " +
                     std::to_string(layers[0].rows));
  }
}

template <class T>
Tensor<T> mlp_forward_batch(std::span<const Tensor<T>> layers, const Tensor<T>& input, T slope,
                            MlpCache<T>* cache = nullptr) {
  check_mlp_input(layers, input.cols);
  const std::size_t n_layers = layers.size() / 2;
  if (cache) {
    cache->inputs.assign(n_layers, {});
    cache->pre.assign(n_layers, {});
  }
  Tensor<T> x = input;
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Tensor<T>& w = layers[2 * l];
    const Tensor<T>& b = layers[2 * l + 1];
    if (w.rows != x.cols) throw ShapeError("mlp: layer " + std::to_string(l) + " width mismatch");
    Tensor<T> z(x.rows, w.cols);
    auto zm = as_matrix(z);
    zm.noalias() = as_matrix(x) * as_matrix(w);
    zm.rowwise() += as_matrix(b).row(0);
    if (cache) cache->inputs[l] = std::move(x);
    if (l + 1 < n_layers) {
      if (cache) cache->pre[l] = z;
      for (auto& v : z.data) v = v > T(0) ? v : v * slope;
    }
    x = std::move(z);
  }
  return x;
}

/// Accumulates weight gradients into `d_layers` and (optionally) writes the
/// input gradient.
template <class T>
void mlp_backward_batch(std::span<const Tensor<T>> layers, const MlpCache<T>& cache, const Tensor<T>& d_out, T slope,
                        std::span<Tensor<T>> d_layers, Tensor<T>* d_input) {
  const std::size_t n_layers = layers.size() / 2;
  Tensor<T> g = d_out;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Tensor<T>& w = layers[2 * l];
    const Tensor<T>& x = cache.inputs[l];
    if (l + 1 < n_layers) {
      const Tensor<T>& z = cache.pre[l];
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        if (!(z.data[i] > T(0))) g.data[i] *= slope;
      }
    }
    as_matrix(d_layers[2 * l]).noalias() += as_matrix(x).transpose() * as_matrix(g);
    // Row-ordered sum; Eigen's vectorized reduction order depends on pointer alignment.
    T* db = d_layers[2 * l + 1].data.data();
    for (std::size_t r = 0; r < g.rows; ++r) {
      const T* gr = g.data.data() + r * g.cols;
      for (std::size_t c = 0; c < g.cols; ++c) db[c] += gr[c];
    }
    if (l > 0 || d_input) {
      Tensor<T> gx(g.rows, w.rows);
      as_matrix(gx).noalias() = as_matrix(g) * as_matrix(w).transpose();
      g = std::move(gx);
    }
  }
  if (d_input) *d_input = std::move(g);
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

/// Single-sample evaluation of the appearance MLP: raw SH coefficients and
/// sigmoid opacity from the concatenated [feature; encoded position].
template <class T>
struct MlpOutput {
  std::vector<T> sh;
  T alpha;
};

template <class T>
MlpOutput<T> mlp_forward(std::span<const T> feature, std::span<const T> pe, std::span<const Tensor<T>> layers, T slope,
                         int sh_count) {
  Tensor<T> in(1, feature.size() + pe.size());
  std::copy(feature.begin(), feature.end(), in.data.begin());
  std::copy(pe.begin(), pe.end(), in.data.begin() + feature.size());
  const Tensor<T> out = mlp_forward_batch(layers, in, slope);
  if (out.cols != std::size_t(sh_count + 1)) throw ShapeError("mlp_forward: output width mismatch");
  MlpOutput<T> r;
  r.sh.assign(out.data.begin(), out.data.begin() + sh_count);
  r.alpha = sigmoid(out.data[sh_count]);
  return r;
}

}  // namespace blendsplat
