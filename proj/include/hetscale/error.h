// Copyright 2026 The HetScale Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace hetscale {

enum class ErrorCode {
  kInvalidInput,
  kInconsistentHierarchy,
  kDuplicateNode,
  kInsufficientCapacity,
  kInvalidShape,
  kParseError,
  kRangeError,
  kOutOfRange,
  kInvalidConfig,
  kGapInSchedule,
  kNoFeasibleRatio,
  kConfigError,
  kIoError,
};

const char* error_code_name(ErrorCode code);

// Every failure surfaced by the library. `line` is 1-based and only set for
// errors that originate in a text file; `field` names the offending key.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what, int line = 0, std::string field = {})
      : std::runtime_error(what), code_(code), line_(line), field_(std::move(field)) {}

  ErrorCode code() const { return code_; }
  int line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  ErrorCode code_;
  int line_;
  std::string field_;
};

}  // namespace hetscale
