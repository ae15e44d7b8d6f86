// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace camforge {

enum class ErrorCode {
  Syntax,
  UnknownParam,
  DuplicateParam,
  Value,
  Range,
  UnknownStyle,
  SpaceMismatch,
  DimensionMismatch,
  TooSmall,
  Shape,
  State,
  Divergence,
  Config,
  Io,
  Bind,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Syntax: return "SyntaxError";
    case ErrorCode::UnknownParam: return "UnknownParam";
    case ErrorCode::DuplicateParam: return "DuplicateParam";
    case ErrorCode::Value: return "ValueError";
    case ErrorCode::Range: return "RangeError";
    case ErrorCode::UnknownStyle: return "UnknownStyle";
    case ErrorCode::SpaceMismatch: return "SpaceMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::Shape: return "ShapeError";
    case ErrorCode::State: return "StateError";
    case ErrorCode::Divergence: return "DivergenceError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Bind: return "BindError";
  }
  return "Error";
}

/// Every failure raised by the library carries one of the typed codes above.
/// `position` is a byte offset into the directive text for parse errors and
/// npos otherwise.
class Error : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  Error(ErrorCode code, const std::string& message, std::size_t position = npos)
      : std::runtime_error(message), code_(code), position_(position) {}

  ErrorCode code() const noexcept { return code_; }
  std::size_t position() const noexcept { return position_; }

 private:
  ErrorCode code_;
  std::size_t position_;
};

}  // namespace camforge
