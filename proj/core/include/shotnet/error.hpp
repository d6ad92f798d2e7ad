// Copyright 2026 The shotnet Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace shotnet {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind {
  kShape,          // wiring bug: tensor extents disagree
  kConfig,         // invalid configuration value (exit 2)
  kIo,             // missing file, short read, malformed on-disk data (exit 3)
  kCompatibility,  // checkpoint/config mismatch (exit 4)
  kNumerical,      // NaN/Inf, exp overflow (exit 5)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::kShape, what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kConfig, what) {}
};

/// I/O and on-disk format failures. `file` and `field` locate the problem.
class IoError : public Error {
 public:
  IoError(const std::string& file, const std::string& field, const std::string& what)
      : Error(ErrorKind::kIo, file + (field.empty() ? "" : " [" + field + "]") + ": " + what),
        file_(file),
        field_(field) {}

  const std::string& file() const noexcept { return file_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::string file_;
  std::string field_;
};

class CompatibilityError : public Error {
 public:
  explicit CompatibilityError(const std::string& what)
      : Error(ErrorKind::kCompatibility, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::kNumerical, what) {}
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return 2;
    case ErrorKind::kIo: return 3;
    case ErrorKind::kCompatibility: return 4;
    case ErrorKind::kNumerical: return 5;
    case ErrorKind::kShape: return 1;
  }
  return 1;
}

}  // namespace shotnet
