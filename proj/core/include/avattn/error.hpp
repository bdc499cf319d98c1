// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace avattn {

enum class ErrorKind {
  kInvalidInput,
  kTooShort,
  kConfig,
  kInsufficientData,
  kDegenerateVector,
  kShape,
  kParse,
  kValidation,
  kAlignment,
  kLookup,
  kInvalidMask,
  kDegenerateTask,
  kNonFinite,
  kIo,
  kMissingArtifact,
};

std::string_view ToString(ErrorKind kind);

/// All library failures are reported through this exception; `kind()` lets
/// callers branch without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void Require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) Fail(kind, message);
}

}  // namespace avattn
