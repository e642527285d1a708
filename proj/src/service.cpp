// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#include "blendsplat/service.hpp"

#include <atomic>
#include <chrono>
#include <cstring>
#include <deque>
#include <iostream>
#include <thread>
#include <variant>

#include <boost/asio/signal_set.hpp>
#include <boost/asio/strand.hpp>
#include <boost/asio/thread_pool.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "blendsplat/backends.hpp"
#include "blendsplat/image_io.hpp"
#include "blendsplat/rasterizer.hpp"

namespace blendsplat::service {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

namespace {

template <class V>
void put_le(std::string& out, V v) {
  char b[sizeof(V)];
  std::memcpy(b, &v, sizeof(V));
  out.append(b, sizeof(V));
}

template <class V>
V get_le(std::string_view in, std::size_t off) {
  V v;
  std::memcpy(&v, in.data() + off, sizeof(V));
  return v;
}

Eigen::Vector3d vec3(const nlohmann::json& j, const char* key, std::uint64_t id) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw RequestError("bad_camera", id, std::string("camera.") + key + " needs 3 numbers");
  return Eigen::Vector3d(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
}

std::vector<float> expr_field(const nlohmann::json& j, const char* key, int dim, std::uint64_t id) {
  if (!j.contains(key)) throw RequestError("bad_expr", id, std::string("missing '") + key + "'");
  const auto& v = j[key];
  if (!v.is_array()) throw RequestError("bad_expr", id, std::string("'") + key + "' must be an array");
  if (int(v.size()) != dim) {
    throw RequestError("bad_expr", id,
                       std::string("'") + key + "' has " + std::to_string(v.size()) + " values, expected " +
                           std::to_string(dim));
  }
  std::vector<float> out;
  for (const auto& x : v) {
    if (!x.is_number()) throw RequestError("bad_expr", id, std::string("'") + key + "' must hold numbers");
    const double d = x.get<double>();
    if (!std::isfinite(d)) throw RequestError("bad_expr", id, "non-finite expression value");
    out.push_back(float(d));
  }
  return out;
}

}  // namespace

std::string encode_frame(const FrameMessage& f) {
  if (f.payload.size() != 3ull * f.width * f.height) throw ShapeError("frame payload must be 3*width*height bytes");
  std::string out;
  out.reserve(kFrameHeaderBytes + f.payload.size());
  out.append(kFrameMagic, 4);
  put_le<std::uint32_t>(out, kFrameVersion);
  put_le<std::uint64_t>(out, f.request_id);
  put_le<float>(out, f.render_ms);
  put_le<std::uint32_t>(out, f.width);
  put_le<std::uint32_t>(out, f.height);
  put_le<std::uint32_t>(out, std::uint32_t(f.payload.size()));
  out.append(reinterpret_cast<const char*>(f.payload.data()), f.payload.size());
  return out;
}

FrameMessage decode_frame(std::string_view b) {
  if (b.size() < kFrameHeaderBytes || std::memcmp(b.data(), kFrameMagic, 4) != 0) {
    throw FormatError("frame: bad magic or short header");
  }
  if (get_le<std::uint32_t>(b, 4) != kFrameVersion) throw FormatError("frame: unsupported version");
  FrameMessage f;
  f.request_id = get_le<std::uint64_t>(b, 8);
  f.render_ms = get_le<float>(b, 16);
  f.width = get_le<std::uint32_t>(b, 20);
  f.height = get_le<std::uint32_t>(b, 24);
  const auto len = get_le<std::uint32_t>(b, 28);
  if (len != 3ull * f.width * f.height || b.size() != kFrameHeaderBytes + len) {
    throw FormatError("frame: payload length mismatch");
  }
  f.payload.assign(b.begin() + kFrameHeaderBytes, b.end());
  return f;
}

nlohmann::json error_message(std::uint64_t request_id, const std::string& code, const std::string& message) {
  return {{"type", "error"}, {"request_id", request_id}, {"code", code}, {"message", message}};
}

Renderer::Renderer(AnimGaussianCloud<float> cloud, ServiceOptions opt) : cloud_(std::move(cloud)), opt_(std::move(opt)) {
  cloud_.validate();
}

nlohmann::json Renderer::info() const {
  nlohmann::json j{{"type", "info"},
                   {"version", kProtocolVersion},
                   {"B", cloud_.expr_dim},
                   {"f_dim", cloud_.feat_dim},
                   {"k", cloud_.sh_degree},
                   {"N", cloud_.size()},
                   {"backend", backend_name(cloud_.backend)},
                   {"max_pixels", opt_.max_pixels},
                   {"queue_depth", opt_.queue_depth}};
  if (!cloud_.expr_min.empty()) {
    j["expr_min"] = cloud_.expr_min;
    j["expr_max"] = cloud_.expr_max;
  }
  return j;
}

RenderRequest Renderer::parse(const nlohmann::json& j) const {
  if (!j.is_object()) throw RequestError("malformed", 0, "request must be a JSON object");
  const auto& idj = j.contains("request_id") ? j["request_id"] : nlohmann::json();
  if (!idj.is_number_unsigned() && !(idj.is_number_integer() && idj.get<std::int64_t>() >= 0)) {
    throw RequestError("malformed", 0, "request_id must be a non-negative integer");
  }
  RenderRequest r;
  r.request_id = idj.get<std::uint64_t>();
  const std::uint64_t id = r.request_id;
  try {
    const std::string type = j.value("type", std::string("render"));
    if (type != "render") throw RequestError("malformed", id, "unknown request type '" + type + "'");
    r.expr = expr_field(j, "expr", cloud_.expr_dim, id);

    if (!j.contains("width") || !j.contains("height") || !j["width"].is_number_integer() ||
        !j["height"].is_number_integer()) {
      throw RequestError("malformed", id, "width and height must be integers");
    }
    const auto w = j["width"].get<std::int64_t>(), h = j["height"].get<std::int64_t>();
    if (w <= 0 || h <= 0) throw RequestError("malformed", id, "width and height must be positive");
    if (std::uint64_t(w) * std::uint64_t(h) > opt_.max_pixels) {
      throw RequestError("oversize", id,
                         std::to_string(w) + "x" + std::to_string(h) + " exceeds the limit of " +
                             std::to_string(opt_.max_pixels) + " pixels");
    }

    if (!j.contains("camera") || !j["camera"].is_object()) throw RequestError("bad_camera", id, "missing camera");
    const auto& cj = j["camera"];
    const double fov = cj.value("fov_deg", 30.0);
    if (!(fov > 0 && fov < 180)) throw RequestError("bad_camera", id, "fov_deg must lie in (0, 180)");
    if (cj.contains("world_to_cam")) {
      const auto m = cj["world_to_cam"].get<std::vector<double>>();
      if (m.size() != 16) throw RequestError("bad_camera", id, "world_to_cam needs 16 numbers");
      r.camera = look_at(Eigen::Vector3d(0, 0, -1), Eigen::Vector3d::Zero(), Eigen::Vector3d(0, -1, 0), fov, int(w),
                         int(h));
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) r.camera.world_to_cam(a, b) = m[std::size_t(4 * a + b)];
    } else {
      const Eigen::Vector3d eye = vec3(cj, "eye", id);
      const Eigen::Vector3d target = cj.contains("target") ? vec3(cj, "target", id) : Eigen::Vector3d::Zero();
      const Eigen::Vector3d up = cj.contains("up") ? vec3(cj, "up", id) : Eigen::Vector3d(0, -1, 0);
      if ((target - eye).norm() < 1e-12) throw RequestError("bad_camera", id, "eye and target coincide");
      r.camera = look_at(eye, target, up, fov, int(w), int(h));
    }
    r.camera.validate();

    const std::string mode = j.value("mode", std::string("color"));
    if (mode == "color") {
      r.mode = RenderMode::Color;
    } else if (mode == "opacity_diff") {
      r.mode = RenderMode::OpacityDiff;
      r.expr_ref = expr_field(j, "expr_ref", cloud_.expr_dim, id);
    } else if (mode == "peel") {
      r.mode = RenderMode::Peel;
      if (!j.contains("fraction") || !j["fraction"].is_number()) {
        throw RequestError("bad_mode", id, "peel needs a numeric 'fraction'");
      }
      r.fraction = j["fraction"].get<double>();
      if (!(r.fraction >= 0.0 && r.fraction <= 1.0)) throw RequestError("bad_mode", id, "fraction must lie in [0, 1]");
    } else {
      throw RequestError("bad_mode", id, "unknown mode '" + mode + "'");
    }
  } catch (const RequestError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw RequestError("malformed", id, e.what());
  } catch (const Error& e) {
    throw RequestError("bad_camera", id, e.what());
  }
  return r;
}

FrameMessage Renderer::render(const RenderRequest& r) const {
  const auto t0 = std::chrono::steady_clock::now();
  const auto fp = resolve_frame(cloud_, r.expr);
  Image<float> img;
  switch (r.mode) {
    case RenderMode::Color:
      img = rasterize_forward(fp, r.camera).image;
      break;
    case RenderMode::OpacityDiff:
      // Difference of the requested expression against the reference.
      img = render_opacity_diff(cloud_, std::span<const float>(r.expr_ref), std::span<const float>(r.expr), r.camera)
                .image;
      break;
    case RenderMode::Peel:
      img = peel_render(fp, r.camera, r.fraction);
      break;
  }
  if (opt_.render_delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(opt_.render_delay_ms));
  FrameMessage f;
  f.request_id = r.request_id;
  f.width = std::uint32_t(img.width);
  f.height = std::uint32_t(img.height);
  f.payload = to_rgb8(img);
  f.render_ms = float(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  return f;
}

// --- networking --------------------------------------------------------

namespace {

struct Outgoing {
  std::string data;
  bool binary = false;
};

class StreamSession : public std::enable_shared_from_this<StreamSession> {
 public:
  StreamSession(tcp::socket&& s, std::shared_ptr<const Renderer> r, net::thread_pool& pool)
      : ws_(std::move(s)), renderer_(std::move(r)), pool_(pool) {}

  void start(http::request<http::string_body> req) {
    upgrade_ = std::move(req);  // must outlive the async accept
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(1 << 20);
    ws_.async_accept(upgrade_, [self = shared_from_this()](beast::error_code ec) {
      if (!ec) self->do_read();
    });
  }

 private:
  using Job = std::variant<RenderRequest, std::string>;

  void do_read() {
    ws_.async_read(buf_, [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
  }

  void on_read(beast::error_code ec) {
    if (ec) return;  // closed or failed; pending work finishes and is dropped with the session
    const std::string text = beast::buffers_to_string(buf_.data());
    buf_.consume(buf_.size());
    handle(text);
    do_read();
  }

  void handle(const std::string& text) {
    nlohmann::json j;
    std::uint64_t id = 0;
    try {
      j = nlohmann::json::parse(text);
      if (j.is_object() && j.contains("request_id") && j["request_id"].is_number_unsigned()) {
        id = j["request_id"].get<std::uint64_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      enqueue_job(error_message(0, "malformed", std::string("invalid JSON: ") + e.what()).dump(), 0);
      return;
    }
    if (j.is_object() && j.value("type", std::string()) == "info") {
      enqueue_job(renderer_->info().dump(), id);
      return;
    }
    try {
      enqueue_job(renderer_->parse(j), id);
    } catch (const RequestError& e) {
      enqueue_job(error_message(e.request_id(), e.code(), e.what()).dump(), id);
    }
  }

  void enqueue_job(Job job, std::uint64_t id) {
    if (jobs_.size() + (rendering_ ? 1 : 0) >= 1 + renderer_->options().queue_depth) {
      send(error_message(id, "busy", "too many requests in flight on this connection").dump(), false);
      return;
    }
    jobs_.push_back(std::move(job));
    pump();
  }

  void pump() {
    while (!rendering_ && !jobs_.empty()) {
      Job job = std::move(jobs_.front());
      jobs_.pop_front();
      if (auto* text = std::get_if<std::string>(&job)) {
        send(std::move(*text), false);
        continue;
      }
      rendering_ = true;
      // Heap copy: asio handler storage does not honor the Eigen members' alignment.
      auto req = std::make_shared<RenderRequest>(std::get<RenderRequest>(std::move(job)));
      net::post(pool_, [self = shared_from_this(), req]() {
        Outgoing out;
        try {
          out.data = encode_frame(self->renderer_->render(*req));
          out.binary = true;
        } catch (const std::exception& e) {
          out.data = error_message(req->request_id, "internal", e.what()).dump();
        }
        net::post(self->ws_.get_executor(), [self, out = std::move(out)]() mutable {
          self->rendering_ = false;
          self->send(std::move(out.data), out.binary);
          self->pump();
        });
      });
    }
  }

  void send(std::string data, bool binary) {
    out_.push_back({std::move(data), binary});
    if (!writing_) do_write();
  }

  void do_write() {
    writing_ = true;
    ws_.binary(out_.front().binary);
    ws_.async_write(net::buffer(out_.front().data), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->out_.pop_front();
      if (self->out_.empty()) {
        self->writing_ = false;
      } else {
        self->do_write();
      }
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<const Renderer> renderer_;
  net::thread_pool& pool_;
  http::request<http::string_body> upgrade_;
  beast::flat_buffer buf_;
  std::deque<Job> jobs_;
  std::deque<Outgoing> out_;
  bool rendering_ = false;
  bool writing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& s, std::shared_ptr<const Renderer> r, net::thread_pool& pool)
      : stream_(std::move(s)), renderer_(std::move(r)), pool_(pool) {}

  void start() { do_read(); }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buf_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (!ec) self->on_request();
    });
  }

  void on_request() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/stream") {
        stream_.expires_never();
        std::make_shared<StreamSession>(stream_.release_socket(), renderer_, pool_)->start(std::move(req_));
        return;
      }
    }
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(req_.keep_alive());
    res->set(http::field::server, "blendsplat");
    res->set(http::field::access_control_allow_origin, "*");
    if (req_.method() == http::verb::get && req_.target() == "/info") {
      res->result(http::status::ok);
      res->set(http::field::content_type, "application/json");
      res->body() = renderer_->info().dump();
    } else {
      res->result(http::status::not_found);
      res->set(http::field::content_type, "application/json");
      res->body() = error_message(0, "not_found", "unknown endpoint").dump();
    }
    res->prepare_payload();
    http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (res->keep_alive()) {
        self->do_read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<const Renderer> renderer_;
  net::thread_pool& pool_;
  beast::flat_buffer buf_;
  http::request<http::string_body> req_;
};

}  // namespace

struct Server::Impl {
  std::shared_ptr<const Renderer> renderer;
  ServiceOptions opt;
  net::io_context ioc{1};
  tcp::acceptor acceptor{ioc};
  net::thread_pool render_pool{1};
  std::thread thread;
  std::atomic<bool> stopped{false};

  void do_accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket s) {
      if (ec) {
        if (!acceptor.is_open()) return;
      } else {
        std::make_shared<HttpSession>(std::move(s), renderer, render_pool)->start();
      }
      do_accept();
    });
  }
};

Server::Server(std::shared_ptr<const Renderer> renderer, ServiceOptions opt) : impl_(std::make_unique<Impl>()) {
  impl_->renderer = std::move(renderer);
  impl_->opt = std::move(opt);
  beast::error_code ec;
  const auto addr = net::ip::make_address(impl_->opt.host, ec);
  if (ec) throw ConfigError("invalid bind address: " + impl_->opt.host);
  const tcp::endpoint ep(addr, impl_->opt.port);
  auto& a = impl_->acceptor;
  a.open(ep.protocol(), ec);
  if (!ec) a.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(ep, ec);
  if (!ec) a.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw LoadError(impl_->opt.host + ":" + std::to_string(impl_->opt.port), "cannot bind: " + ec.message());
  impl_->do_accept();
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::run() {
  net::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
  signals.async_wait([this](beast::error_code, int) { impl_->ioc.stop(); });
  impl_->ioc.run();
}

void Server::start() {
  impl_->thread = std::thread([this] { impl_->ioc.run(); });
}

void Server::stop() {
  if (impl_->stopped.exchange(true)) return;
  impl_->ioc.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
  impl_->render_pool.join();
}

}  // namespace blendsplat::service
