// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace aipo {

/// Failure categories. The CLI maps each onto a process exit code.
enum class ErrorKind {
  config,   // invalid arguments or configuration (exit 2)
  io,       // file system or file-format failure (exit 3)
  numeric,  // shape mismatch, non-finite value, singular matrix (exit 4)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& detail)
      : std::runtime_error(code + ": " + detail), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Short machine-readable token, e.g. "bad_magic" or "shape_mismatch".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

inline Error config_error(std::string code, const std::string& detail) {
  return Error(ErrorKind::config, std::move(code), detail);
}
inline Error io_error(std::string code, const std::string& detail) {
  return Error(ErrorKind::io, std::move(code), detail);
}
inline Error numeric_error(std::string code, const std::string& detail) {
  return Error(ErrorKind::numeric, std::move(code), detail);
}

}  // namespace aipo
