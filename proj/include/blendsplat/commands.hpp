// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "blendsplat/camera.hpp"
#include "blendsplat/cloud.hpp"
#include "blendsplat/config.hpp"

// Operator commands. Each is a short composition of library calls; the
// executable in tools/ only parses flags and maps exceptions to exit codes.
namespace blendsplat::cmd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

/// Maps a library exception to a process exit code.
int exit_code_for(const std::exception& e);

struct LookAtSpec {
  Eigen::Vector3d eye{0.0, 0.0, -3.0};
  Eigen::Vector3d target{0.0, 0.0, 0.0};
  Eigen::Vector3d up{0.0, -1.0, 0.0};
  double fov_deg = 30.0;
  int width = 256;
  int height = 256;

  Camera camera() const;
};

/// Model shape and initialization for `train`. Read from the "model" object
/// of a training config file; all other keys belong to TrainConfig.
struct ModelConfig {
  BackendTag backend = BackendTag::FeatureBlend;
  int feat_dim = ModelDefaults::kFeatDim;
  int sh_degree = ModelDefaults::kShDegree;
  int pe_octaves = ModelDefaults::kPeOctaves;
  int hidden = 0;
  std::size_t init_points = ModelDefaults::kInitPoints;
  std::array<double, 3> bounds_lo{-1.0, -1.0, -1.0};
  std::array<double, 3> bounds_hi{1.0, 1.0, 1.0};
  std::uint64_t init_seed = 0;
};

struct RunConfig {
  TrainConfig train;
  ModelConfig model;
};

RunConfig read_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& c);

/// Expression from an inline comma list or a JSON file holding an array.
std::vector<float> parse_expr(const std::string& inline_list, const std::string& json_path, int expr_dim);

struct TrainArgs {
  std::filesystem::path config, dataset, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> iters;
  std::optional<int> threads;
  std::filesystem::path log;  // JSON-lines log; defaults to <out>.log.jsonl
};
/// Returns the final log line (also printed to `out`).
std::string train(const TrainArgs& a, std::ostream& out);

struct RenderArgs {
  std::filesystem::path checkpoint, out;
  std::vector<float> expr;
  LookAtSpec camera;
};
void render(const RenderArgs& a);

struct AnimateArgs {
  std::filesystem::path checkpoint, sequence, out_dir;
};
/// Renders every frame of a manifest-format sequence; returns the frame count.
std::size_t animate(const AnimateArgs& a);

struct EvalArgs {
  std::filesystem::path checkpoint, dataset, out_json;
  std::string split = "test";  // test | train | all
};
struct EvalRow {
  double l2 = 0, psnr = 0, ssim = 0, seconds = 0;
  std::size_t frames = 0;
};
EvalRow eval(const EvalArgs& a, std::ostream& out);

struct BasisVisArgs {
  std::filesystem::path checkpoint, out;
  int index = 0;
  double magnitude = 1.0;
  std::vector<float> neutral;  // empty: zero expression
  LookAtSpec camera;
};
void basis_vis(const BasisVisArgs& a);

struct PeelArgs {
  std::filesystem::path checkpoint, out_dir;
  std::vector<float> expr;
  std::vector<double> fractions;
  LookAtSpec camera;
};
std::vector<std::filesystem::path> peel(const PeelArgs& a);

struct OpacityDiffArgs {
  std::filesystem::path checkpoint, out;
  std::vector<float> expr_i, expr_j;
  LookAtSpec camera;
};
/// Writes the diverging-color image; returns max |field|.
double opacity_diff(const OpacityDiffArgs& a);

struct BenchArgs {
  std::filesystem::path checkpoint, out_csv;
  std::vector<int> resolutions{64, 128, 256, 512};
  std::vector<int> threads;  // empty: logical cores only
  int repeats = 10;
};
struct BenchRow {
  int resolution = 0, threads = 0;
  std::size_t n = 0;
  double ms_per_frame = 0;
};
std::vector<BenchRow> bench(const BenchArgs& a);
void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

struct SynthArgs {
  std::filesystem::path out_dir;
  std::filesystem::path teacher;  // optional teacher checkpoint
  std::uint64_t seed = 1;
  int expr_dim = 8;
  std::size_t gaussians = 500;
  int frames = 100, test = 20, resolution = 128;
};
void synth(const SynthArgs& a);

}  // namespace blendsplat::cmd
