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

#include "hetscale/error.h"

namespace hetscale {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "InvalidInput";
    case ErrorCode::kInconsistentHierarchy: return "InconsistentHierarchy";
    case ErrorCode::kDuplicateNode: return "DuplicateNode";
    case ErrorCode::kInsufficientCapacity: return "InsufficientCapacity";
    case ErrorCode::kInvalidShape: return "InvalidShape";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kRangeError: return "RangeError";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kGapInSchedule: return "GapInSchedule";
    case ErrorCode::kNoFeasibleRatio: return "NoFeasibleRatio";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace hetscale
