// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "blendsplat/errors.hpp"

namespace blendsplat {

/// Model shape defaults.
struct ModelDefaults {
  static constexpr int kExprDim = 52;
  static constexpr int kFeatDim = 32;
  static constexpr int kShDegree = 3;
  static constexpr int kHidden = 64;
  static constexpr int kConditionHidden = 128;
  static constexpr int kConditionLayers = 5;
  static constexpr int kPeOctaves = 4;
  static constexpr double kLeakySlope = 0.01;
  static constexpr int kInitPoints = 2500;
};

struct TrainConfig {
  // Learning rates per parameter group.
  double lr_mlp = 1.6e-4;
  double lr_mu = 1.6e-4;
  double lr_feat = 0.0025;
  double lr_scale = 0.005;
  double lr_rot = 0.001;
  // Explicit per-Gaussian appearance (ablation backends only).
  double lr_color = 0.0025;
  double lr_opacity = 0.05;
  // Final learning rate of the decaying groups, as a fraction of the initial one.
  double lr_final_fraction = 0.01;

  double lambda_1 = 0.8;
  double lambda_ssim = 0.2;
  double lambda_p = 0.0;
  int perceptual_start = 10000;
  double lambda_mu = 0.01;

  int densify_start = 500;
  int densify_stop = 15000;
  int densify_interval = 100;
  double tau_alpha = 0.005;
  double tau_pos = 2e-4;
  double percent_dense = 0.01;

  int iters = 5000;
  std::uint64_t seed = 0;
  std::array<double, 3> background{1.0, 1.0, 1.0};

  int threads = 0;
  int log_every = 1;

  void validate() const {
    for (double lr : {lr_mlp, lr_mu, lr_feat, lr_scale, lr_rot, lr_color, lr_opacity}) {
      if (!(lr > 0)) throw ConfigError("learning rates must be positive");
    }
    if (!(densify_start < densify_stop)) throw ConfigError("densify_start must be < densify_stop");
    if (densify_interval <= 0) throw ConfigError("densify_interval must be positive");
    for (double l : {lambda_1, lambda_ssim, lambda_p, lambda_mu}) {
      if (!(l >= 0)) throw ConfigError("loss weights must be non-negative");
    }
    if (iters < 0) throw ConfigError("iters must be non-negative");
    if (!(lr_final_fraction > 0 && lr_final_fraction <= 1)) throw ConfigError("lr_final_fraction must be in (0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr_mlp", c.lr_mlp},
                     {"lr_mu", c.lr_mu},
                     {"lr_feat", c.lr_feat},
                     {"lr_scale", c.lr_scale},
                     {"lr_rot", c.lr_rot},
                     {"lr_color", c.lr_color},
                     {"lr_opacity", c.lr_opacity},
                     {"lr_final_fraction", c.lr_final_fraction},
                     {"lambda_1", c.lambda_1},
                     {"lambda_ssim", c.lambda_ssim},
                     {"lambda_p", c.lambda_p},
                     {"perceptual_start", c.perceptual_start},
                     {"lambda_mu", c.lambda_mu},
                     {"densify_start", c.densify_start},
                     {"densify_stop", c.densify_stop},
                     {"densify_interval", c.densify_interval},
                     {"tau_alpha", c.tau_alpha},
                     {"tau_pos", c.tau_pos},
                     {"percent_dense", c.percent_dense},
                     {"iters", c.iters},
                     {"seed", c.seed},
                     {"background", c.background},
                     {"threads", c.threads},
                     {"log_every", c.log_every}};
}

/// Unknown keys are rejected so typos do not silently fall back to defaults.
inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  nlohmann::json known;
  to_json(known, c);
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key: " + key);
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("lr_mlp", c.lr_mlp);
    get("lr_mu", c.lr_mu);
    get("lr_feat", c.lr_feat);
    get("lr_scale", c.lr_scale);
    get("lr_rot", c.lr_rot);
    get("lr_color", c.lr_color);
    get("lr_opacity", c.lr_opacity);
    get("lr_final_fraction", c.lr_final_fraction);
    get("lambda_1", c.lambda_1);
    get("lambda_ssim", c.lambda_ssim);
    get("lambda_p", c.lambda_p);
    get("perceptual_start", c.perceptual_start);
    get("lambda_mu", c.lambda_mu);
    get("densify_start", c.densify_start);
    get("densify_stop", c.densify_stop);
    get("densify_interval", c.densify_interval);
    get("tau_alpha", c.tau_alpha);
    get("tau_pos", c.tau_pos);
    get("percent_dense", c.percent_dense);
    get("iters", c.iters);
    get("seed", c.seed);
    get("background", c.background);
    get("threads", c.threads);
    get("log_every", c.log_every);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
}

}  // namespace blendsplat
