// Copyright (C) 2026 The sebox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sebox {

enum class ErrorCode {
  UnknownClass,
  UnknownCommon,
  UnknownType,
  UnknownName,
  UnknownPermission,
  DuplicatePermission,
  UndeclaredAttribute,
  SyntaxError,
  MalformedDefine,
  ExpansionDepthExceeded,
  ArityMismatch,
  BoxNotPresent,
  FewerThanTwoRows,
  NonPositiveValue,
  SegmentTooSmall,
  InvalidBreakpoints,
  InvalidArgument,
  RepoNotFound,
  BranchNotFound,
  CommitNotFound,
  OverlappingBuckets,
  MissingWalkData,
  CapacityExceeded,
  IoError,
  ProcessError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::UnknownCommon: return "UnknownCommon";
    case ErrorCode::UnknownType: return "UnknownType";
    case ErrorCode::UnknownName: return "UnknownName";
    case ErrorCode::UnknownPermission: return "UnknownPermission";
    case ErrorCode::DuplicatePermission: return "DuplicatePermission";
    case ErrorCode::UndeclaredAttribute: return "UndeclaredAttribute";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::MalformedDefine: return "MalformedDefine";
    case ErrorCode::ExpansionDepthExceeded: return "ExpansionDepthExceeded";
    case ErrorCode::ArityMismatch: return "ArityMismatch";
    case ErrorCode::BoxNotPresent: return "BoxNotPresent";
    case ErrorCode::FewerThanTwoRows: return "FewerThanTwoRows";
    case ErrorCode::NonPositiveValue: return "NonPositiveValue";
    case ErrorCode::SegmentTooSmall: return "SegmentTooSmall";
    case ErrorCode::InvalidBreakpoints: return "InvalidBreakpoints";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::RepoNotFound: return "RepoNotFound";
    case ErrorCode::BranchNotFound: return "BranchNotFound";
    case ErrorCode::CommitNotFound: return "CommitNotFound";
    case ErrorCode::OverlappingBuckets: return "OverlappingBuckets";
    case ErrorCode::MissingWalkData: return "MissingWalkData";
    case ErrorCode::CapacityExceeded: return "CapacityExceeded";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ProcessError: return "ProcessError";
  }
  return "Unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Non-fatal finding attached to a file position.
struct Diagnostic {
  std::string file;
  int line = 0;
  std::string message;

  std::string str() const {
    if (file.empty()) return message;
    return file + ":" + std::to_string(line) + ": " + message;
  }
  friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

}  // namespace sebox
