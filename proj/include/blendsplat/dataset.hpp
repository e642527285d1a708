// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "blendsplat/camera.hpp"
#include "blendsplat/errors.hpp"
#include "blendsplat/image_io.hpp"
#include "blendsplat/parallel.hpp"
#include "blendsplat/tensor.hpp"

namespace blendsplat {

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestName = "manifest.json";

struct FrameRecord {
  std::string image_path;  // relative to the dataset directory
  std::vector<float> expr;
  Camera camera;
};

struct DatasetManifest {
  int version = kManifestVersion;
  int expr_dim = 0;
  std::array<double, 3> background{1.0, 1.0, 1.0};
  std::vector<FrameRecord> frames;
  std::vector<std::size_t> train, test;
};

struct ExpressionFrame {
  Image<float> image;
  std::vector<float> expr;
  Camera camera;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<ExpressionFrame> frames;  // manifest order

  std::size_t size() const { return frames.size(); }
  int expr_dim() const { return manifest.expr_dim; }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : m.frames) {
    const auto& c = f.camera;
    nlohmann::json j{{"image_path", f.image_path},
                     {"expr", f.expr},
                     {"world_to_cam", c.matrix_row_major()},
                     {"fx", c.fx},
                     {"fy", c.fy},
                     {"cx", c.cx},
                     {"cy", c.cy},
                     {"width", c.width},
                     {"height", c.height},
                     {"znear", c.znear},
                     {"zfar", c.zfar}};
    frames.push_back(std::move(j));
  }
  return {{"version", m.version},
          {"expr_dim", m.expr_dim},
          {"background", m.background},
          {"frames", frames},
          {"splits", {{"train", m.train}, {"test", m.test}}}};
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    if (!j.is_object()) throw FormatError("manifest: top level must be an object");
    m.version = j.at("version").get<int>();
    if (m.version != kManifestVersion) {
      throw FormatError("manifest: unsupported version " + std::to_string(m.version));
    }
    m.expr_dim = j.at("expr_dim").get<int>();
    if (m.expr_dim < 1) throw FormatError("manifest: expr_dim must be positive");
    if (j.contains("background")) m.background = j.at("background").get<std::array<double, 3>>();
    const auto& frames = j.at("frames");
    if (!frames.is_array() || frames.empty()) throw FormatError("manifest: contains no frames");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      const std::string where = "manifest frame " + std::to_string(i);
      FrameRecord r;
      r.image_path = f.at("image_path").get<std::string>();
      r.expr = f.at("expr").get<std::vector<float>>();
      if (int(r.expr.size()) != m.expr_dim) {
        throw FormatError(where + ": expr has " + std::to_string(r.expr.size()) + " values, expected " +
                          std::to_string(m.expr_dim));
      }
      const auto w2c = f.at("world_to_cam").get<std::vector<double>>();
      if (w2c.size() != 16) {
        throw FormatError(where + ": world_to_cam has " + std::to_string(w2c.size()) + " values, expected 16");
      }
      Camera& c = r.camera;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) c.world_to_cam(a, b) = w2c[4 * a + b];
      c.fx = f.at("fx").get<double>();
      c.fy = f.at("fy").get<double>();
      c.cx = f.at("cx").get<double>();
      c.cy = f.at("cy").get<double>();
      c.width = f.at("width").get<int>();
      c.height = f.at("height").get<int>();
      if (f.contains("znear")) c.znear = f.at("znear").get<double>();
      if (f.contains("zfar")) c.zfar = f.at("zfar").get<double>();
      try {
        c.validate();
      } catch (const ConfigError& e) {
        throw FormatError(where + ": " + e.what());
      }
      m.frames.push_back(std::move(r));
    }
    if (j.contains("splits")) {
      const auto& s = j.at("splits");
      if (s.contains("train")) m.train = s.at("train").get<std::vector<std::size_t>>();
      if (s.contains("test")) m.test = s.at("test").get<std::vector<std::size_t>>();
    } else {
      for (std::size_t i = 0; i < m.frames.size(); ++i) m.train.push_back(i);
    }
    for (const auto* split : {&m.train, &m.test}) {
      for (std::size_t idx : *split) {
        if (idx >= m.frames.size()) throw FormatError("manifest: split index " + std::to_string(idx) + " out of range");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto path = dir / kManifestName;
  std::ifstream in(path);
  if (!in) throw LoadError(path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return manifest_from_json(j);
}

inline void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kManifestName;
  std::ofstream out(path);
  if (!out) throw LoadError(path.string(), "cannot open for writing");
  out << manifest_to_json(m).dump(1) << '\n';
  if (!out) throw LoadError(path.string(), "write failed");
}

/// Loads the manifest and decodes every image (in parallel, order-stable).
inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw LoadError(dir.string(), "dataset directory not found");
  Dataset ds;
  ds.manifest = read_manifest(dir);
  const auto& m = ds.manifest;
  ds.frames.resize(m.frames.size());
  for (const auto& f : m.frames) {
    const auto p = dir / f.image_path;
    if (!std::filesystem::exists(p)) throw LoadError(p.string());
  }
  parallel_for(m.frames.size(), [&](std::size_t i) {
    const auto& rec = m.frames[i];
    auto& out = ds.frames[i];
    out.image = read_png((dir / rec.image_path).string());
    out.expr = rec.expr;
    out.camera = rec.camera;
  });
  for (std::size_t i = 0; i < m.frames.size(); ++i) {
    const auto& img = ds.frames[i].image;
    const auto& c = m.frames[i].camera;
    if (img.width != c.width || img.height != c.height) {
      throw FormatError("manifest frame " + std::to_string(i) + ": image is " + std::to_string(img.width) + "x" +
                        std::to_string(img.height) + ", camera expects " + std::to_string(c.width) + "x" +
                        std::to_string(c.height));
    }
  }
  return ds;
}

/// Writes images as 16-bit PNGs next to the manifest.
inline void save_dataset(const std::filesystem::path& dir, const DatasetManifest& m,
                         const std::vector<Image<float>>& images) {
  if (images.size() != m.frames.size()) throw ShapeError("save_dataset: one image per frame required");
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto p = dir / m.frames[i].image_path;
    std::filesystem::create_directories(p.parent_path());
    write_png(p.string(), images[i], 16);
  }
  write_manifest(dir, m);
}

}  // namespace blendsplat
