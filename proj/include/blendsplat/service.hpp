// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "blendsplat/camera.hpp"
#include "blendsplat/cloud.hpp"
#include "blendsplat/errors.hpp"

// Streaming render endpoint. HTTP GET /info returns model metadata; a
// WebSocket at /stream answers JSON render requests with binary frames.
// Byte layouts are documented in docs/formats.md.
namespace blendsplat::service {

inline constexpr char kFrameMagic[4] = {'H', 'G', 'F', 'R'};
inline constexpr std::uint32_t kFrameVersion = 1;
inline constexpr std::size_t kFrameHeaderBytes = 32;
inline constexpr int kProtocolVersion = 1;

enum class RenderMode { Color, OpacityDiff, Peel };

struct RenderRequest {
  std::uint64_t request_id = 0;
  std::vector<float> expr;
  Camera camera;
  RenderMode mode = RenderMode::Color;
  std::vector<float> expr_ref;  // OpacityDiff
  double fraction = 0.0;        // Peel
};

struct FrameMessage {
  std::uint64_t request_id = 0;
  float render_ms = 0;
  std::uint32_t width = 0, height = 0;
  std::vector<std::uint8_t> payload;  // RGB8, row-major
};

/// A request that cannot be served. `code` is one of: malformed, bad_expr,
/// bad_camera, bad_mode, oversize, busy, internal.
class RequestError : public Error {
 public:
  RequestError(std::string code, std::uint64_t request_id, const std::string& msg)
      : Error(msg), code_(std::move(code)), request_id_(request_id) {}
  const std::string& code() const noexcept { return code_; }
  std::uint64_t request_id() const noexcept { return request_id_; }

 private:
  std::string code_;
  std::uint64_t request_id_;
};

std::string encode_frame(const FrameMessage& f);
/// Throws FormatError on a bad header or length mismatch.
FrameMessage decode_frame(std::string_view bytes);
nlohmann::json error_message(std::uint64_t request_id, const std::string& code, const std::string& message);

struct ServiceOptions {
  std::string host = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::size_t max_pixels = 512 * 512;
  std::size_t queue_depth = 4;  // queued requests per connection beyond the one in flight
  int render_delay_ms = 0;      // added to every render; for load testing only
};

/// Holds an immutable model and turns requests into frames. Safe to call
/// from several threads.
class Renderer {
 public:
  Renderer(AnimGaussianCloud<float> cloud, ServiceOptions opt);

  nlohmann::json info() const;
  /// Validates a request object; throws RequestError.
  RenderRequest parse(const nlohmann::json& j) const;
  FrameMessage render(const RenderRequest& r) const;

  const AnimGaussianCloud<float>& cloud() const noexcept { return cloud_; }
  const ServiceOptions& options() const noexcept { return opt_; }

 private:
  AnimGaussianCloud<float> cloud_;
  ServiceOptions opt_;
};

class Server {
 public:
  /// Binds immediately; throws LoadError if the address is unavailable.
  Server(std::shared_ptr<const Renderer> renderer, ServiceOptions opt);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const;
  /// Serves until stop() or SIGINT/SIGTERM.
  void run();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace blendsplat::service
