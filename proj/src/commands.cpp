// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "blendsplat/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "blendsplat/backends.hpp"
#include "blendsplat/checkpoint.hpp"
#include "blendsplat/dataset.hpp"
#include "blendsplat/image_io.hpp"
#include "blendsplat/losses.hpp"
#include "blendsplat/parallel.hpp"
#include "blendsplat/rasterizer.hpp"
#include "blendsplat/synth.hpp"
#include "blendsplat/trainer.hpp"

namespace blendsplat::cmd {
namespace {

using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

AnimGaussianCloud<float> load_model(const fs::path& p) { return load_checkpoint(p).cloud; }

void check_expr(const AnimGaussianCloud<float>& c, const std::vector<float>& e, const char* what) {
  if (int(e.size()) != c.expr_dim) {
    throw ConfigError(std::string(what) + ": expected " + std::to_string(c.expr_dim) + " values, got " +
                      std::to_string(e.size()));
  }
}

RasterSettings settings_for(const std::array<double, 3>& bg) {
  RasterSettings s;
  s.background = bg;
  return s;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw LoadError(dir.string(), "cannot create directory");
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05zu.png", i);
  return buf;
}

/// Midpoint of the embedded training ranges, or zeros.
std::vector<float> default_expr(const AnimGaussianCloud<float>& c) {
  std::vector<float> e(std::size_t(c.expr_dim), 0.0f);
  if (c.expr_min.size() == e.size() && c.expr_max.size() == e.size()) {
    for (std::size_t k = 0; k < e.size(); ++k) e[k] = 0.5f * (c.expr_min[k] + c.expr_max[k]);
  }
  return e;
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const LoadError*>(&e) || dynamic_cast<const FormatError*>(&e)) return kExitIo;
  if (dynamic_cast<const Error*>(&e) || dynamic_cast<const nlohmann::json::exception*>(&e)) return kExitUsage;
  if (dynamic_cast<const std::ios_base::failure*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kExitIo;
  return kExitUsage;
}

Camera LookAtSpec::camera() const {
  if (width <= 0 || height <= 0) throw ConfigError("camera: width and height must be positive");
  if (!(fov_deg > 0 && fov_deg < 180)) throw ConfigError("camera: fov must lie in (0, 180) degrees");
  if ((target - eye).norm() < 1e-12) throw ConfigError("camera: eye and target coincide");
  return look_at(eye, target, up, fov_deg, width, height);
}

RunConfig read_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig rc;
  if (j.contains("model")) {
    const auto m = j["model"];
    j.erase("model");
    static const std::vector<std::string> keys{"backend",     "feat_dim",  "sh_degree", "pe_octaves", "hidden",
                                               "init_points", "bounds_lo", "bounds_hi", "init_seed"};
    for (const auto& [key, _] : m.items()) {
      if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("unknown model key: " + key);
    }
    try {
      auto& mc = rc.model;
      if (m.contains("backend")) mc.backend = backend_from_name(m["backend"].get<std::string>());
      mc.feat_dim = m.value("feat_dim", mc.feat_dim);
      mc.sh_degree = m.value("sh_degree", mc.sh_degree);
      mc.pe_octaves = m.value("pe_octaves", mc.pe_octaves);
      mc.hidden = m.value("hidden", mc.hidden);
      mc.init_points = m.value("init_points", mc.init_points);
      mc.bounds_lo = m.value("bounds_lo", mc.bounds_lo);
      mc.bounds_hi = m.value("bounds_hi", mc.bounds_hi);
      mc.init_seed = m.value("init_seed", mc.init_seed);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config model: ") + e.what());
    }
    if (rc.model.feat_dim <= 0 || rc.model.init_points == 0 || rc.model.hidden < 0 || rc.model.pe_octaves < 0) {
      throw ConfigError("config model: dimensions must be positive");
    }
    for (int a = 0; a < 3; ++a) {
      if (!(rc.model.bounds_lo[a] < rc.model.bounds_hi[a])) throw ConfigError("config model: empty bounds");
    }
  }
  rc.train = j.get<TrainConfig>();
  return rc;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json j = c.train;
  const auto& m = c.model;
  j["model"] = {{"backend", backend_name(m.backend)}, {"feat_dim", m.feat_dim},       {"sh_degree", m.sh_degree},
                {"pe_octaves", m.pe_octaves},         {"hidden", m.hidden},           {"init_points", m.init_points},
                {"bounds_lo", m.bounds_lo},           {"bounds_hi", m.bounds_hi},     {"init_seed", m.init_seed}};
  return j;
}

std::vector<float> parse_expr(const std::string& inline_list, const std::string& json_path, int expr_dim) {
  std::vector<float> e;
  if (!json_path.empty()) {
    if (!inline_list.empty()) throw ConfigError("give either an inline expression or a JSON file, not both");
    std::ifstream in(json_path);
    if (!in) throw LoadError(json_path);
    try {
      const auto j = nlohmann::json::parse(in);
      e = (j.is_object() ? j.at("expr") : j).get<std::vector<float>>();
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError("expression file " + json_path + ": " + ex.what());
    }
  } else if (!inline_list.empty()) {
    std::stringstream ss(inline_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        e.push_back(std::stof(tok, &used));
        if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
      } catch (const std::logic_error&) {
        throw ConfigError("not a number in expression list: '" + tok + "'");
      }
    }
  } else {
    e.assign(std::size_t(std::max(expr_dim, 0)), 0.0f);
  }
  if (expr_dim >= 0 && int(e.size()) != expr_dim) {
    throw ConfigError("expression has " + std::to_string(e.size()) + " values, model expects " +
                      std::to_string(expr_dim));
  }
  return e;
}

std::string train(const TrainArgs& a, std::ostream& out) {
  RunConfig rc = read_run_config(a.config);
  if (a.seed) rc.train.seed = *a.seed;
  if (a.iters) rc.train.iters = *a.iters;
  if (a.threads) rc.train.threads = *a.threads;
  rc.train.validate();
  if (!fs::is_directory(a.dataset)) throw ConfigError("dataset directory not found: " + a.dataset.string());
  const Dataset ds = load_dataset(a.dataset);

  InitOptions io;
  io.shape.backend = rc.model.backend;
  io.shape.expr_dim = ds.expr_dim();
  io.shape.feat_dim = rc.model.feat_dim;
  io.shape.sh_degree = rc.model.sh_degree;
  io.shape.pe_octaves = rc.model.pe_octaves;
  io.shape.hidden = rc.model.hidden;
  io.sample_count = rc.model.init_points;
  io.bounds = std::array<Eigen::Vector3d, 2>{Eigen::Vector3d(rc.model.bounds_lo.data()),
                                             Eigen::Vector3d(rc.model.bounds_hi.data())};
  io.seed = rc.model.init_seed;
  auto cloud = init_cloud<float>({}, io);

  const fs::path log_path = a.log.empty() ? fs::path(a.out.string() + ".log.jsonl") : a.log;
  std::ofstream log(log_path);
  if (!log) throw LoadError(log_path.string(), "cannot write");
  TrainHooks hooks;
  hooks.on_log = [&](const TrainLogEntry& e) { log << nlohmann::json(e).dump() << '\n'; };
  hooks.on_densify = [&](int iter, const DensifyReport& r) {
    log << nlohmann::json{{"densify", iter}, {"pruned", r.pruned}, {"cloned", r.cloned}, {"split", r.split},
                          {"N", r.n_after}}
               .dump()
        << '\n';
  };
  const auto t0 = Clock::now();
  const TrainResult res = blendsplat::train(ds, std::move(cloud), rc.train, hooks);
  save_checkpoint(res.cloud, a.out, &res.optimizer);

  std::ostringstream line;
  line << std::setprecision(9) << "final iters=" << rc.train.iters;
  if (!res.log.empty()) {
    const auto& e = res.log.back();
    line << " loss=" << e.loss << " psnr=" << e.psnr_train;
  }
  line << " N=" << res.cloud.size();
  out << "trained in " << std::fixed << std::setprecision(1) << seconds_since(t0) << " s, checkpoint "
      << a.out.string() << '\n'
      << line.str() << std::endl;
  return line.str();
}

void render(const RenderArgs& a) {
  const auto cloud = load_model(a.checkpoint);
  check_expr(cloud, a.expr, "render expression");
  const auto fp = resolve_frame(cloud, a.expr);
  const auto img = rasterize_forward(fp, a.camera.camera()).image;
  write_png(a.out.string(), img);
}

std::size_t animate(const AnimateArgs& a) {
  const auto cloud = load_model(a.checkpoint);
  std::ifstream in(a.sequence);
  if (!in) throw LoadError(a.sequence.string());
  DatasetManifest seq;
  try {
    seq = manifest_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("sequence " + a.sequence.string() + ": " + e.what());
  }
  if (seq.expr_dim != cloud.expr_dim) {
    throw ConfigError("sequence expr_dim " + std::to_string(seq.expr_dim) + " does not match model " +
                      std::to_string(cloud.expr_dim));
  }
  ensure_dir(a.out_dir);
  const auto rs = settings_for(seq.background);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const auto& f = seq.frames[i];
    const auto img = rasterize_forward(resolve_frame(cloud, f.expr), f.camera, rs).image;
    write_png((a.out_dir / frame_name(i)).string(), img);
  }
  return seq.frames.size();
}

EvalRow eval(const EvalArgs& a, std::ostream& out) {
  const auto cloud = load_model(a.checkpoint);
  if (!fs::is_directory(a.dataset)) throw ConfigError("dataset directory not found: " + a.dataset.string());
  const Dataset ds = load_dataset(a.dataset);
  if (ds.expr_dim() != cloud.expr_dim) throw ConfigError("dataset expr_dim does not match the checkpoint");
  std::vector<std::size_t> ids;
  if (a.split == "test") {
    ids = ds.manifest.test;
  } else if (a.split == "train") {
    ids = ds.manifest.train;
  } else if (a.split == "all") {
    for (std::size_t i = 0; i < ds.size(); ++i) ids.push_back(i);
  } else {
    throw ConfigError("unknown split '" + a.split + "' (expected test, train or all)");
  }
  if (ids.empty()) throw ConfigError("split '" + a.split + "' has no frames");
  const auto rs = settings_for(ds.manifest.background);
  EvalRow row;
  nlohmann::json per_frame = nlohmann::json::array();
  for (std::size_t i : ids) {
    const auto& f = ds.frames[i];
    const auto t0 = Clock::now();
    const auto img = rasterize_forward(resolve_frame(cloud, f.expr), f.camera, rs).image;
    const double secs = seconds_since(t0);
    const double l2 = mse(img, f.image), p = psnr(img, f.image), s = ssim(img, f.image);
    row.l2 += l2;
    row.psnr += p;
    row.ssim += s;
    row.seconds += secs;
    per_frame.push_back({{"frame", i}, {"l2", l2}, {"psnr", p}, {"ssim", s}, {"seconds", secs}});
  }
  row.frames = ids.size();
  const double n = double(ids.size());
  row.l2 /= n;
  row.psnr /= n;
  row.ssim /= n;
  row.seconds /= n;
  out << "split  frames  L2          PSNR     SSIM     Time (s)\n"
      << std::left << std::setw(7) << a.split << std::setw(8) << row.frames << std::scientific << std::setprecision(3)
      << std::setw(12) << row.l2 << std::fixed << std::setprecision(3) << std::setw(9) << row.psnr
      << std::setprecision(4) << std::setw(9) << row.ssim << std::setprecision(5) << row.seconds << std::endl;
  if (!a.out_json.empty()) {
    std::ofstream js(a.out_json);
    if (!js) throw LoadError(a.out_json.string(), "cannot write");
    js << nlohmann::json{{"split", a.split},
                         {"frames", row.frames},
                         {"l2", row.l2},
                         {"psnr", row.psnr},
                         {"ssim", row.ssim},
                         {"seconds_per_frame", row.seconds},
                         {"per_frame", per_frame}}
              .dump(2)
       << '\n';
  }
  return row;
}

void basis_vis(const BasisVisArgs& a) {
  const auto cloud = load_model(a.checkpoint);
  if (a.index < 0 || a.index >= cloud.expr_dim) {
    throw ConfigError("basis index " + std::to_string(a.index) + " out of range [0, " +
                      std::to_string(cloud.expr_dim) + ")");
  }
  std::vector<float> e = a.neutral.empty() ? std::vector<float>(std::size_t(cloud.expr_dim), 0.0f) : a.neutral;
  check_expr(cloud, e, "neutral expression");
  e[std::size_t(a.index)] += float(a.magnitude);
  write_png(a.out.string(), rasterize_forward(resolve_frame(cloud, e), a.camera.camera()).image);
}

std::vector<fs::path> peel(const PeelArgs& a) {
  const auto cloud = load_model(a.checkpoint);
  check_expr(cloud, a.expr, "peel expression");
  if (a.fractions.empty()) throw ConfigError("peel: no fractions given");
  for (double f : a.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("peel fraction must lie in [0, 1]");
  }
  ensure_dir(a.out_dir);
  const auto fp = resolve_frame(cloud, a.expr);
  const Camera cam = a.camera.camera();
  std::vector<fs::path> written;
  for (std::size_t k = 0; k < a.fractions.size(); ++k) {
    char name[48];
    std::snprintf(name, sizeof name, "peel_%02zu_%.3f.png", k, a.fractions[k]);
    written.push_back(a.out_dir / name);
    write_png(written.back().string(), peel_render(fp, cam, a.fractions[k]));
  }
  return written;
}

double opacity_diff(const OpacityDiffArgs& a) {
  const auto cloud = load_model(a.checkpoint);
  check_expr(cloud, a.expr_i, "expression i");
  check_expr(cloud, a.expr_j, "expression j");
  const auto d = render_opacity_diff(cloud, std::span<const float>(a.expr_i), std::span<const float>(a.expr_j),
                                     a.camera.camera());
  write_png(a.out.string(), d.image);
  double m = 0;
  for (float v : d.field) m = std::max(m, double(std::abs(v)));
  return m;
}

std::vector<BenchRow> bench(const BenchArgs& a) {
  const auto cloud = load_model(a.checkpoint);
  if (a.resolutions.empty()) throw ConfigError("bench: no resolutions given");
  if (a.repeats <= 0) throw ConfigError("bench: repeats must be positive");
  for (int r : a.resolutions) {
    if (r <= 0 || r > 4096) throw ConfigError("bench: resolution out of range: " + std::to_string(r));
  }
  std::vector<int> threads = a.threads.empty() ? std::vector<int>{0} : a.threads;
  const auto expr = default_expr(cloud);
  std::vector<BenchRow> rows;
  for (int t : threads) {
    if (t < 0) throw ConfigError("bench: thread counts must be non-negative");
    set_num_threads(t);
    for (int res : a.resolutions) {
      LookAtSpec spec;
      spec.width = spec.height = res;
      const Camera cam = spec.camera();
      rasterize_forward(resolve_frame(cloud, expr), cam);  // warm-up
      const auto t0 = Clock::now();
      for (int k = 0; k < a.repeats; ++k) rasterize_forward(resolve_frame(cloud, expr), cam);
      rows.push_back({res, ThreadPool::global().num_threads(), cloud.size(), 1000.0 * seconds_since(t0) / a.repeats});
    }
  }
  if (!a.out_csv.empty()) write_bench_csv(a.out_csv, rows);
  return rows;
}

void write_bench_csv(const fs::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw LoadError(path.string(), "cannot write");
  out << "resolution,pixels,threads,gaussians,ms_per_frame\n";
  for (const auto& r : rows) {
    out << r.resolution << ',' << std::size_t(r.resolution) * std::size_t(r.resolution) << ',' << r.threads << ','
        << r.n << ',' << std::fixed << std::setprecision(4) << r.ms_per_frame << '\n';
  }
}

void synth(const SynthArgs& a) {
  SynthOptions o;
  o.seed = a.seed;
  o.expr_dim = a.expr_dim;
  o.n_gaussians = a.gaussians;
  o.n_frames = a.frames;
  o.n_test = a.test;
  o.resolution = a.resolution;
  if (o.expr_dim <= 0 || o.n_gaussians == 0 || o.n_frames <= 0 || o.n_test < 0 || o.resolution <= 0) {
    throw ConfigError("synth: sizes must be positive");
  }
  const auto scene = synth_scene(o);
  save_dataset(a.out_dir, scene.manifest, scene.images);
  if (!a.teacher.empty()) save_checkpoint(scene.teacher, a.teacher);
}

}  // namespace blendsplat::cmd
