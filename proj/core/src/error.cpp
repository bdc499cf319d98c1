// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "avattn/error.hpp"

namespace avattn {

std::string_view ToString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kTooShort: return "too-short";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kDegenerateVector: return "degenerate-vector";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kAlignment: return "alignment";
    case ErrorKind::kLookup: return "lookup";
    case ErrorKind::kInvalidMask: return "invalid-mask";
    case ErrorKind::kDegenerateTask: return "degenerate-task";
    case ErrorKind::kNonFinite: return "non-finite";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kMissingArtifact: return "missing-artifact";
  }
  return "unknown";
}

}  // namespace avattn
