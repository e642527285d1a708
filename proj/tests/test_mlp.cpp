// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "blendsplat/mlp.hpp"
#include "blendsplat/oracle.hpp"

namespace bs = blendsplat;

namespace {

std::vector<bs::Tensor<double>> random_layers(std::mt19937_64& rng, const std::vector<int>& widths) {
  std::normal_distribution<double> n(0, 0.5);
  std::vector<bs::Tensor<double>> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers.emplace_back(widths[l], widths[l + 1]);
    layers.emplace_back(1, widths[l + 1]);
    for (auto& v : layers[layers.size() - 2].data) v = n(rng);
    for (auto& v : layers.back().data) v = n(rng);
  }
  return layers;
}

// Straight triple loop; shares nothing with the Eigen path.
bs::Tensor<double> naive_forward(const std::vector<bs::Tensor<double>>& layers, const bs::Tensor<double>& x0,
                                 double slope) {
  bs::Tensor<double> x = x0;
  for (std::size_t l = 0; l < layers.size() / 2; ++l) {
    const auto& w = layers[2 * l];
    const auto& b = layers[2 * l + 1];
    bs::Tensor<double> z(x.rows, w.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
      for (std::size_t o = 0; o < w.cols; ++o) {
        double acc = b(0, o);
        for (std::size_t k = 0; k < w.rows; ++k) acc += x(i, k) * w(k, o);
        const bool hidden = l + 1 < layers.size() / 2;
        z(i, o) = hidden && acc <= 0 ? slope * acc : acc;
      }
    x = z;
  }
  return x;
}

}  // namespace

TEST(PositionalEncoding, LayoutAndValues) {
  const std::array<double, 3> lo{-1, -1, -1}, hi{1, 1, 1};
  const std::vector<double> mu{0.25, -0.5, 0.0};
  const auto pe = bs::encode_position<double>(mu, lo, hi, 4);
  ASSERT_EQ(pe.size(), 27u);
  for (int a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(pe[a], mu[a]);
  for (int l = 0; l < 4; ++l) {
    const double f = std::numbers::pi * std::pow(2.0, l);
    for (int a = 0; a < 3; ++a) {
      EXPECT_NEAR(pe[3 + 6 * l + a], std::sin(f * mu[a]), 1e-12);
      EXPECT_NEAR(pe[3 + 6 * l + 3 + a], std::cos(f * mu[a]), 1e-12);
    }
  }
}

TEST(PositionalEncoding, NormalizesToBounds) {
  const std::array<double, 3> lo{0, 10, -4}, hi{2, 20, 4};
  const std::vector<double> mu{2, 10, 0};
  const auto pe = bs::encode_position<double>(mu, lo, hi, 0);
  EXPECT_DOUBLE_EQ(pe[0], 1.0);
  EXPECT_DOUBLE_EQ(pe[1], -1.0);
  EXPECT_DOUBLE_EQ(pe[2], 0.0);
}

TEST(PositionalEncoding, BackwardMatchesFiniteDifferences) {
  const std::array<double, 3> lo{-0.8, -0.9, -0.7}, hi{0.8, 0.9, 0.7};
  std::vector<double> mu{0.13, -0.41, 0.22};
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  std::vector<double> w(27);
  for (auto& v : w) v = n(rng);
  std::vector<double> d_mu(3, 0.0);
  bs::encode_position_backward<double>(mu, lo, hi, 4, w, d_mu);
  auto loss = [&]() {
    const auto pe = bs::encode_position<double>(mu, lo, hi, 4);
    double s = 0;
    for (std::size_t k = 0; k < pe.size(); ++k) s += w[k] * pe[k];
    return s;
  };
  const auto num = bs::oracle::finite_diff(loss, mu, 1e-6);
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(d_mu[a], num[a], 1e-6);
}

TEST(Mlp, ZeroWeightsGiveHalfOpacityAndZeroColor) {
  std::vector<bs::Tensor<float>> layers{bs::Tensor<float>(59, 64), bs::Tensor<float>(1, 64), bs::Tensor<float>(64, 49),
                                        bs::Tensor<float>(1, 49)};
  std::vector<float> f(32, 0.3f), pe(27, -0.2f);
  const auto out = bs::mlp_forward<float>(f, pe, layers, 0.01f, 48);
  EXPECT_EQ(out.alpha, 0.5f);
  for (float v : out.sh) EXPECT_EQ(v, 0.0f);
}

TEST(Mlp, BatchedMatchesNaiveLoops) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  const auto layers = random_layers(rng, {7, 16, 16, 5});
  bs::Tensor<double> x(33, 7);
  for (auto& v : x.data) v = n(rng);
  const auto fast = bs::mlp_forward_batch<double>(layers, x, 0.01);
  const auto slow = naive_forward(layers, x, 0.01);
  for (std::size_t k = 0; k < fast.data.size(); ++k) EXPECT_NEAR(fast.data[k], slow.data[k], 1e-12);
}

TEST(Mlp, LeakyKinkAtZero) {
  std::vector<bs::Tensor<double>> layers{bs::Tensor<double>(1, 1), bs::Tensor<double>(1, 1), bs::Tensor<double>(1, 1),
                                         bs::Tensor<double>(1, 1)};
  layers[0](0, 0) = 1;
  layers[2](0, 0) = 1;
  auto eval = [&](double v) {
    bs::Tensor<double> x(1, 1);
    x(0, 0) = v;
    return bs::mlp_forward_batch<double>(layers, x, 0.01)(0, 0);
  };
  EXPECT_DOUBLE_EQ(eval(2.0), 2.0);
  EXPECT_DOUBLE_EQ(eval(-2.0), -0.02);
  EXPECT_DOUBLE_EQ(eval(0.0), 0.0);
}

TEST(Mlp, WidthMismatchThrows) {
  std::mt19937_64 rng(1);
  const auto layers = random_layers(rng, {4, 8, 2});
  bs::Tensor<double> x(3, 5);
  EXPECT_THROW(bs::mlp_forward_batch<double>(layers, x, 0.01), bs::ShapeError);
}

TEST(Mlp, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 1);
  auto layers = random_layers(rng, {5, 9, 9, 4});
  bs::Tensor<double> x(6, 5), w(6, 4);
  for (auto& v : x.data) v = n(rng);
  for (auto& v : w.data) v = n(rng);
  auto loss = [&]() {
    const auto y = bs::mlp_forward_batch<double>(layers, x, 0.01);
    double s = 0;
    for (std::size_t k = 0; k < y.data.size(); ++k) s += w.data[k] * y.data[k];
    return s;
  };
  bs::MlpCache<double> cache;
  bs::mlp_forward_batch<double>(layers, x, 0.01, &cache);
  std::vector<bs::Tensor<double>> d_layers;
  for (const auto& l : layers) d_layers.push_back(bs::zeros_like(l));
  bs::Tensor<double> d_x;
  bs::mlp_backward_batch<double>(layers, cache, w, 0.01, d_layers, &d_x);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto num = bs::oracle::finite_diff(loss, layers[l].data, 1e-6);
    for (std::size_t k = 0; k < num.size(); ++k) EXPECT_NEAR(d_layers[l].data[k], num[k], 1e-6) << l << "/" << k;
  }
  const auto num_x = bs::oracle::finite_diff(loss, x.data, 1e-6);
  for (std::size_t k = 0; k < num_x.size(); ++k) EXPECT_NEAR(d_x.data[k], num_x[k], 1e-6);
}
