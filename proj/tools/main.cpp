// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "blendsplat/checkpoint.hpp"
#include "blendsplat/commands.hpp"
#include "blendsplat/parallel.hpp"
#include "blendsplat/service.hpp"

namespace bs = blendsplat;
namespace cmd = blendsplat::cmd;

namespace {

struct CameraFlags {
  std::vector<double> eye{0.0, 0.0, -3.0}, target{0.0, 0.0, 0.0}, up{0.0, -1.0, 0.0};
  cmd::LookAtSpec spec;

  void add(CLI::App* app) {
    app->add_option("--eye", eye, "Camera position x,y,z")->delimiter(',')->expected(3)->capture_default_str();
    app->add_option("--target", target, "Look-at point x,y,z")->delimiter(',')->expected(3)->capture_default_str();
    app->add_option("--up", up, "World up direction x,y,z")->delimiter(',')->expected(3)->capture_default_str();
    app->add_option("--fov", spec.fov_deg, "Vertical field of view in degrees")->capture_default_str();
    app->add_option("--width", spec.width, "Image width in pixels")->capture_default_str();
    app->add_option("--height", spec.height, "Image height in pixels")->capture_default_str();
  }
  cmd::LookAtSpec get() const {
    cmd::LookAtSpec s = spec;
    s.eye = Eigen::Vector3d(eye[0], eye[1], eye[2]);
    s.target = Eigen::Vector3d(target[0], target[1], target[2]);
    s.up = Eigen::Vector3d(up[0], up[1], up[2]);
    return s;
  }
};

struct ExprFlags {
  std::string list, file;
  void add(CLI::App* app, const std::string& name = "expr") {
    app->add_option("--" + name, list, "Expression values, comma separated (default: zeros)");
    app->add_option("--" + name + "-json", file, "JSON file holding the expression array");
  }
  std::vector<float> get(int dim) const { return cmd::parse_expr(list, file, dim); }
};

int expr_dim_of(const std::string& checkpoint) { return bs::load_checkpoint(checkpoint).cloud.expr_dim; }

const char* env_or(const char* name, const char* fallback) {
  const char* v = std::getenv(name);
  return v && *v ? v : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blendsplat: expression-driven animatable Gaussian splatting"};
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  app.add_option("--threads", threads, "Worker threads (0 = all logical cores)")->capture_default_str();

  // train
  cmd::TrainArgs ta;
  std::uint64_t seed = 0;
  int iters = -1;
  auto* train = app.add_subcommand("train", "Fit a model to a dataset");
  train->add_option("--config", ta.config, "Training config JSON")->required();
  train->add_option("--dataset", ta.dataset, "Dataset directory with manifest.json")->required();
  train->add_option("--out", ta.out, "Output checkpoint path")->required();
  auto* seed_opt = train->add_option("--seed", seed, "Override the config seed");
  auto* iters_opt = train->add_option("--iters", iters, "Override the iteration count");
  train->add_option("--log", ta.log, "JSON-lines training log (default <out>.log.jsonl)");

  // render
  cmd::RenderArgs ra;
  std::string render_ckpt;
  ExprFlags render_expr;
  CameraFlags render_cam;
  auto* render = app.add_subcommand("render", "Render one expression from one viewpoint");
  render->add_option("--checkpoint", render_ckpt, "Model checkpoint")->required();
  render->add_option("--out", ra.out, "Output PNG")->required();
  render_expr.add(render);
  render_cam.add(render);

  // animate
  cmd::AnimateArgs aa;
  auto* animate = app.add_subcommand("animate", "Render a sequence of (expression, camera) frames");
  animate->add_option("--checkpoint", aa.checkpoint, "Model checkpoint")->required();
  animate->add_option("--sequence", aa.sequence, "Sequence in manifest.json format")->required();
  animate->add_option("--out-dir", aa.out_dir, "Directory for frame_NNNNN.png")->required();

  // eval
  cmd::EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Report L2, PSNR, SSIM and render time on a dataset split");
  eval->add_option("--checkpoint", ea.checkpoint, "Model checkpoint")->required();
  eval->add_option("--dataset", ea.dataset, "Dataset directory")->required();
  eval->add_option("--split", ea.split, "test, train or all")->capture_default_str();
  eval->add_option("--json", ea.out_json, "Also write the table and per-frame metrics as JSON");

  // basis-vis
  cmd::BasisVisArgs ba;
  std::string basis_ckpt;
  ExprFlags basis_neutral;
  CameraFlags basis_cam;
  auto* basis = app.add_subcommand("basis-vis", "Render a one-hot expression");
  basis->add_option("--checkpoint", basis_ckpt, "Model checkpoint")->required();
  basis->add_option("--index", ba.index, "Expression coefficient to set")->required();
  basis->add_option("--magnitude", ba.magnitude, "Value added at the index")->capture_default_str();
  basis->add_option("--out", ba.out, "Output PNG")->required();
  basis_neutral.add(basis, "neutral");
  basis_cam.add(basis);

  // peel
  cmd::PeelArgs pa;
  std::string peel_ckpt;
  ExprFlags peel_expr;
  CameraFlags peel_cam;
  auto* peel = app.add_subcommand("peel", "Render after removing the nearest fraction of Gaussians");
  peel->add_option("--checkpoint", peel_ckpt, "Model checkpoint")->required();
  peel->add_option("--fractions", pa.fractions, "Fractions in [0, 1], comma separated")->delimiter(',')->required();
  peel->add_option("--out-dir", pa.out_dir, "Output directory")->required();
  peel_expr.add(peel);
  peel_cam.add(peel);

  // opacity-diff
  cmd::OpacityDiffArgs oa;
  std::string od_ckpt;
  ExprFlags od_i, od_j;
  CameraFlags od_cam;
  auto* odiff = app.add_subcommand("opacity-diff", "Visualize per-pixel opacity change between two expressions");
  odiff->add_option("--checkpoint", od_ckpt, "Model checkpoint")->required();
  odiff->add_option("--out", oa.out, "Output PNG")->required();
  od_i.add(odiff, "expr-i");
  od_j.add(odiff, "expr-j");
  od_cam.add(odiff);

  // bench
  cmd::BenchArgs bna;
  auto* bench = app.add_subcommand("bench", "Time rendering across resolutions and thread counts");
  bench->add_option("--checkpoint", bna.checkpoint, "Model checkpoint")->required();
  bench->add_option("--resolutions", bna.resolutions, "Square resolutions, comma separated")
      ->delimiter(',')
      ->capture_default_str();
  bench->add_option("--thread-counts", bna.threads, "Thread counts, comma separated (default: all cores)")
      ->delimiter(',');
  bench->add_option("--repeats", bna.repeats, "Timed renders per cell")->capture_default_str();
  bench->add_option("--out", bna.out_csv, "CSV output path")->required();

  // serve
  std::string serve_ckpt, bind = env_or("BLENDSPLAT_BIND", "127.0.0.1:8080");
  int max_res = std::atoi(env_or("BLENDSPLAT_MAX_RESOLUTION", "512"));
  bs::service::ServiceOptions so;
  auto* serve = app.add_subcommand("serve", "Stream renders over WebSocket (/stream) with metadata at /info");
  serve->add_option("--checkpoint", serve_ckpt, "Model checkpoint")->required();
  serve->add_option("--bind", bind, "host:port (env BLENDSPLAT_BIND)")->capture_default_str();
  serve->add_option("--max-resolution", max_res, "Largest allowed side for square frames; limits width*height "
                                                 "(env BLENDSPLAT_MAX_RESOLUTION)")
      ->capture_default_str();
  serve->add_option("--queue-depth", so.queue_depth, "Queued requests per connection")->capture_default_str();

  // synth
  cmd::SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic teacher scene as a dataset");
  synth->add_option("--out-dir", sa.out_dir, "Dataset directory")->required();
  synth->add_option("--teacher", sa.teacher, "Also write the teacher checkpoint here");
  synth->add_option("--seed", sa.seed, "Generator seed")->capture_default_str();
  synth->add_option("--expr-dim", sa.expr_dim, "Expression dimension B")->capture_default_str();
  synth->add_option("--gaussians", sa.gaussians, "Teacher Gaussian count")->capture_default_str();
  synth->add_option("--frames", sa.frames, "Training frames")->capture_default_str();
  synth->add_option("--test-frames", sa.test, "Held-out frames")->capture_default_str();
  synth->add_option("--resolution", sa.resolution, "Square image size")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? cmd::kExitOk : cmd::kExitUsage;
  }

  try {
    if (threads < 0) throw bs::ConfigError("--threads must be non-negative");
    if (threads > 0) bs::set_num_threads(threads);
    if (*train) {
      if (*seed_opt) ta.seed = seed;
      if (*iters_opt) ta.iters = iters;
      if (threads > 0) ta.threads = threads;
      cmd::train(ta, std::cout);
    } else if (*render) {
      ra.checkpoint = render_ckpt;
      ra.expr = render_expr.get(expr_dim_of(render_ckpt));
      ra.camera = render_cam.get();
      cmd::render(ra);
    } else if (*animate) {
      std::cout << "wrote " << cmd::animate(aa) << " frames to " << aa.out_dir.string() << '\n';
    } else if (*eval) {
      cmd::eval(ea, std::cout);
    } else if (*basis) {
      ba.checkpoint = basis_ckpt;
      if (!basis_neutral.list.empty() || !basis_neutral.file.empty()) {
        ba.neutral = basis_neutral.get(expr_dim_of(basis_ckpt));
      }
      ba.camera = basis_cam.get();
      cmd::basis_vis(ba);
    } else if (*peel) {
      pa.checkpoint = peel_ckpt;
      pa.expr = peel_expr.get(expr_dim_of(peel_ckpt));
      pa.camera = peel_cam.get();
      for (const auto& p : cmd::peel(pa)) std::cout << p.string() << '\n';
    } else if (*odiff) {
      oa.checkpoint = od_ckpt;
      const int dim = expr_dim_of(od_ckpt);
      oa.expr_i = od_i.get(dim);
      oa.expr_j = od_j.get(dim);
      oa.camera = od_cam.get();
      std::cout << "max |opacity difference| " << cmd::opacity_diff(oa) << '\n';
    } else if (*bench) {
      for (const auto& r : cmd::bench(bna)) {
        std::cout << r.resolution << "^2 threads=" << r.threads << " N=" << r.n << " " << r.ms_per_frame << " ms\n";
      }
    } else if (*serve) {
      const auto colon = bind.rfind(':');
      if (colon == std::string::npos) throw bs::ConfigError("--bind must be host:port");
      so.host = bind.substr(0, colon);
      const int port = std::atoi(bind.c_str() + colon + 1);
      if (port < 0 || port > 65535) throw bs::ConfigError("--bind port out of range");
      so.port = std::uint16_t(port);
      if (max_res <= 0) throw bs::ConfigError("--max-resolution must be positive");
      so.max_pixels = std::size_t(max_res) * std::size_t(max_res);
      auto renderer = std::make_shared<const bs::service::Renderer>(bs::load_checkpoint(serve_ckpt).cloud, so);
      bs::service::Server server(renderer, so);
      std::cout << "listening on http://" << so.host << ':' << server.port() << " (/info, /stream)" << std::endl;
      server.run();
    } else if (*synth) {
      cmd::synth(sa);
      std::cout << "wrote dataset to " << sa.out_dir.string() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cmd::exit_code_for(e);
  }
  return cmd::kExitOk;
}
