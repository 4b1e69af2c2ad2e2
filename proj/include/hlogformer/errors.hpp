#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hlog {

/// Broad failure class. The CLI maps these onto exit codes 2, 3 and 4.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  /// Stable machine-readable name, e.g. "MalformedRecord".
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t position, const std::string& reason)
      : Error(ErrorKind::Data, "MalformedRecord",
              "malformed record at byte " + std::to_string(position) + ": " + reason),
        position_(position),
        reason_(reason) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t position_;
  std::string reason_;
};

class DepthExceeded : public Error {
 public:
  explicit DepthExceeded(std::size_t max_depth)
      : Error(ErrorKind::Data, "DepthExceeded",
              "record nesting exceeds max depth " + std::to_string(max_depth)) {}
};

class EmptyTree : public Error {
 public:
  EmptyTree() : Error(ErrorKind::Data, "EmptyTree", "record has no leaves") {}
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error(ErrorKind::Data, "EmptyCorpus", "corpus is empty") {}
};

class NoMaskablePositions : public Error {
 public:
  NoMaskablePositions()
      : Error(ErrorKind::Data, "NoMaskablePositions", "record has no maskable tokens") {}
};

class WindowOverflow : public Error {
 public:
  WindowOverflow(std::size_t length, std::size_t window)
      : Error(ErrorKind::Config, "WindowOverflow",
              "sequence of length " + std::to_string(length) + " exceeds window " +
                  std::to_string(window)) {}
};

class NonFiniteGradient : public Error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : Error(ErrorKind::Numeric, "NonFiniteGradient", "non-finite gradient in " + param),
        param_(param) {}

  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

inline Error config_error(const std::string& message) {
  return Error(ErrorKind::Config, "ConfigError", message);
}

inline Error data_error(const std::string& message) {
  return Error(ErrorKind::Data, "DataError", message);
}

inline Error numeric_error(const std::string& message) {
  return Error(ErrorKind::Numeric, "NumericError", message);
}

}  // namespace hlog
