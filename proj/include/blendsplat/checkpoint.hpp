// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "blendsplat/cloud.hpp"
#include "blendsplat/errors.hpp"
#include "blendsplat/optimizer.hpp"

namespace blendsplat {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[4] = {'H', 'G', 'A', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint64_t kMaxCheckpointRows = 1ull << 28;

struct Checkpoint {
  AnimGaussianCloud<float> cloud;
  std::optional<Adam<float>> optimizer;
};

namespace detail {

class ByteWriter {
 public:
  template <class V>
  void put(V v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_floats(const std::vector<float>& v) {
    const auto* p = reinterpret_cast<const char*>(v.data());
    bytes_.insert(bytes_.end(), p, p + v.size() * sizeof(float));
  }
  void put_raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<char>& b, std::string path) : bytes_(b), path_(std::move(path)) {}
  template <class V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  void get_floats(std::vector<float>& v, std::size_t n) {
    need(n * sizeof(float));
    v.resize(n);
    std::memcpy(v.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }
  void get_raw(char* out, std::size_t n) {
    need(n);
    std::memcpy(out, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError(path_ + ": checkpoint truncated");
  }
  const std::vector<char>& bytes_;
  std::string path_;
  std::size_t pos_ = 0;
};

inline void put_tensor(ByteWriter& w, const Tensor<float>& t) { w.put_floats(t.data); }

inline void get_tensor(ByteReader& r, Tensor<float>& t, std::size_t rows, std::size_t cols) {
  t.rows = rows;
  t.cols = cols;
  r.get_floats(t.data, rows * cols);
}

}  // namespace detail

/// Serializes to the little-endian layout described in docs/formats.md.
inline std::vector<char> encode_checkpoint(const AnimGaussianCloud<float>& c, const Adam<float>* opt = nullptr) {
  c.validate();
  detail::ByteWriter w;
  w.put_raw(kCheckpointMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(c.backend));
  w.put<std::uint32_t>(std::uint32_t(c.expr_dim));
  w.put<std::uint32_t>(std::uint32_t(c.feat_dim));
  w.put<std::uint32_t>(std::uint32_t(c.sh_degree));
  w.put<std::uint32_t>(std::uint32_t(c.pe_octaves));
  w.put<std::uint64_t>(c.size());
  w.put<float>(c.leaky_slope);
  w.put<float>(c.scene_extent);
  for (float v : c.bounds_lo) w.put<float>(v);
  for (float v : c.bounds_hi) w.put<float>(v);
  w.put<std::uint32_t>(std::uint32_t(c.expr_min.size()));
  w.put_floats(c.expr_min);
  w.put_floats(c.expr_max);
  w.put<std::uint32_t>(std::uint32_t(c.params.mlp.size()));
  for (const auto& t : c.params.mlp) {
    w.put<std::uint32_t>(std::uint32_t(t.rows));
    w.put<std::uint32_t>(std::uint32_t(t.cols));
  }
  const auto write_set = [&](const ParamSet<float>& p) {
    p.for_each([&](const std::string&, const Tensor<float>& t, ParamGroup, bool) { detail::put_tensor(w, t); });
  };
  write_set(c.params);
  w.put<std::uint8_t>(opt ? 1 : 0);
  if (opt) {
    if (opt->rows() != c.size()) throw ShapeError("checkpoint: optimizer state does not match the cloud");
    w.put<std::int64_t>(opt->step);
    write_set(opt->m);
    write_set(opt->v);
  }
  return w.bytes();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& path = "<memory>") {
  detail::ByteReader r(bytes, path);
  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) throw FormatError(path + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  auto& c = ck.cloud;
  const auto backend = r.get<std::uint32_t>();
  if (backend > static_cast<std::uint32_t>(BackendTag::ChangeAll)) {
    throw FormatError(path + ": unknown backend tag " + std::to_string(backend));
  }
  c.backend = static_cast<BackendTag>(backend);
  c.expr_dim = int(r.get<std::uint32_t>());
  c.feat_dim = int(r.get<std::uint32_t>());
  c.sh_degree = int(r.get<std::uint32_t>());
  c.pe_octaves = int(r.get<std::uint32_t>());
  const auto n = r.get<std::uint64_t>();
  if (c.sh_degree > 3 || c.expr_dim < 1 || c.expr_dim > 4096 || c.feat_dim > 4096 || c.pe_octaves > 16 ||
      n > kMaxCheckpointRows) {
    throw FormatError(path + ": implausible checkpoint header");
  }
  c.leaky_slope = r.get<float>();
  c.scene_extent = r.get<float>();
  for (auto& v : c.bounds_lo) v = r.get<float>();
  for (auto& v : c.bounds_hi) v = r.get<float>();
  const auto n_range = r.get<std::uint32_t>();
  if (n_range != 0 && n_range != std::uint32_t(c.expr_dim)) throw FormatError(path + ": bad expression range block");
  r.get_floats(c.expr_min, n_range);
  r.get_floats(c.expr_max, n_range);
  const auto n_mlp = r.get<std::uint32_t>();
  if (n_mlp > 64) throw FormatError(path + ": implausible MLP layer count");
  std::vector<std::pair<std::size_t, std::size_t>> mlp_shapes(n_mlp);
  for (auto& [rows, cols] : mlp_shapes) {
    rows = r.get<std::uint32_t>();
    cols = r.get<std::uint32_t>();
  }
  const auto cols = c.expected_cols();
  const auto read_set = [&](ParamSet<float>& p) {
    p.mlp.resize(n_mlp);
    std::size_t i = 0, l = 0;
    p.for_each([&](const std::string&, Tensor<float>& t, ParamGroup, bool per) {
      if (per) {
        detail::get_tensor(r, t, std::size_t(n), cols[i++]);
      } else {
        detail::get_tensor(r, t, mlp_shapes[l].first, mlp_shapes[l].second);
        ++l;
      }
    });
  };
  read_set(c.params);
  const auto has_opt = r.get<std::uint8_t>();
  if (has_opt > 1) throw FormatError(path + ": bad optimizer flag");
  if (has_opt) {
    Adam<float> opt;
    opt.step = r.get<std::int64_t>();
    read_set(opt.m);
    read_set(opt.v);
    ck.optimizer = std::move(opt);
  }
  if (r.remaining() != 0) throw FormatError(path + ": trailing bytes after checkpoint");
  try {
    c.validate();
  } catch (const ShapeError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return ck;
}

inline void save_checkpoint(const AnimGaussianCloud<float>& c, const std::filesystem::path& path,
                            const Adam<float>* opt = nullptr) {
  const auto bytes = encode_checkpoint(c, opt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string(), "cannot open for writing");
  out.write(bytes.data(), std::streamsize(bytes.size()));
  if (!out) throw LoadError(path.string(), "write failed");
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes, path.string());
}

}  // namespace blendsplat
