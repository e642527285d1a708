// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>

#include "blendsplat/oracle.hpp"
#include "blendsplat/sh.hpp"

namespace bs = blendsplat;

TEST(ShBasis, MatchesTextbookPolynomialsOnSphere) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (int t = 0; t < 500; ++t) {
    const Eigen::Vector3d d = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    std::array<double, 16> y;
    bs::sh_basis(3, bs::Vec3<double>(d), y);
    double want[16];
    bs::oracle::real_sh(d.x(), d.y(), d.z(), 3, want);
    for (int i = 0; i < 16; ++i) EXPECT_NEAR(y[i], want[i], 1e-12) << "coefficient " << i;
  }
}

TEST(ShBasis, OrthonormalUnderMonteCarlo) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  Eigen::Matrix<double, 16, 16> gram = Eigen::Matrix<double, 16, 16>::Zero();
  constexpr int kSamples = 200000;
  for (int t = 0; t < kSamples; ++t) {
    const Eigen::Vector3d d = Eigen::Vector3d(n(rng), n(rng), n(rng)).normalized();
    std::array<double, 16> y;
    bs::sh_basis(3, bs::Vec3<double>(d), y);
    const Eigen::Map<Eigen::Matrix<double, 16, 1>> v(y.data());
    gram += v * v.transpose();
  }
  gram *= 4.0 * std::numbers::pi / kSamples;
  EXPECT_LT((gram - Eigen::Matrix<double, 16, 16>::Identity()).cwiseAbs().maxCoeff(), 0.03);
}

TEST(EvalSh, DcOnlyGivesOffsetColor) {
  std::vector<float> c(48, 0.0f);
  c[0] = 1.0f;
  c[1] = 0.0f;
  c[2] = -2.0f;
  const auto rgb = bs::eval_sh<float>(c, bs::Vec3<float>(0.3f, -0.2f, 0.93f).normalized(), 3);
  EXPECT_NEAR(rgb[0], 0.5f + 0.28209479f, 1e-6f);
  EXPECT_NEAR(rgb[1], 0.5f, 1e-6f);
  EXPECT_EQ(rgb[2], 0.0f);
}

TEST(EvalSh, LinearInCoefficientsAboveClamp) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0, 0.1);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a(48), b(48), s(48);
    for (int k = 0; k < 48; ++k) {
      a[k] = n(rng);
      b[k] = n(rng);
      s[k] = a[k] + b[k];
    }
    const bs::Vec3<double> d = bs::Vec3<double>(n(rng), n(rng), 1.0).normalized();
    const auto ra = bs::eval_sh_raw<double>(a, d, 3), rb = bs::eval_sh_raw<double>(b, d, 3);
    const auto rs = bs::eval_sh_raw<double>(s, d, 3);
    EXPECT_LT((rs - ra - rb).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(EvalSh, DegreeAboveThreeRejected) {
  std::vector<float> c(75, 0.0f);
  EXPECT_THROW(bs::eval_sh<float>(c, bs::Vec3<float>(0, 0, 1), 4), bs::UnsupportedDegree);
  EXPECT_THROW(bs::eval_sh<float>(c, bs::Vec3<float>(0, 0, 1), -1), bs::UnsupportedDegree);
}

TEST(EvalSh, LowerDegreeIgnoresHigherCoefficients) {
  std::vector<double> c(48, 0.7);
  const bs::Vec3<double> d = bs::Vec3<double>(0.2, 0.5, 0.8).normalized();
  const auto full = bs::eval_sh_raw<double>(c, d, 1);
  std::vector<double> trimmed(c.begin(), c.begin() + 12);
  EXPECT_LT((bs::eval_sh_raw<double>(trimmed, d, 1) - full).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EvalShBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 0.3);
  std::vector<double> c(48);
  for (auto& v : c) v = n(rng);
  c[0] = c[1] = c[2] = 1.0;  // keep every channel above the clamp
  bs::Vec3<double> dir(0.3, -0.4, 2.0);
  const bs::Vec3<double> w(0.7, -1.1, 0.4);
  std::vector<double> dc(48);
  const bs::Vec3<double> ddir = bs::eval_sh_backward<double>(c, dir, 3, w, dc);
  auto loss = [&]() { return w.dot(bs::eval_sh<double>(c, dir, 3)); };
  const auto num_c = bs::oracle::finite_diff(loss, c, 1e-6);
  for (int k = 0; k < 48; ++k) EXPECT_NEAR(dc[k], num_c[k], 1e-7);
  const auto num_d = bs::oracle::finite_diff(loss, std::span<double>(dir.data(), 3), 1e-6);
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(ddir[a], num_d[a], 1e-6);
}
