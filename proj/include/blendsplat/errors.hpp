// Copyright 2026 The blendsplat Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace blendsplat {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or image dimensions do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A file or manifest is structurally invalid, truncated, or of an
/// unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A referenced file could not be opened or decoded.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& path, const std::string& what = "cannot open")
      : Error(what + ": " + path), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

class InitError : public Error {
 public:
  using Error::Error;
};

class UnsupportedDegree : public Error {
 public:
  explicit UnsupportedDegree(int degree)
      : Error("spherical harmonics degree " + std::to_string(degree) + " unsupported (max 3)") {}
};

/// Non-finite loss or parameters during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// A feature hook exists but has no implementation in this build.
class NotAvailable : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace blendsplat
