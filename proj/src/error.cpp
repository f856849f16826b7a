// Copyright 2026 The softpref Authors
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

#include "softpref/error.hpp"

namespace softpref {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kTiedArgmax: return "TiedArgmax";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kInvalidDistribution: return "InvalidDistribution";
    case ErrorCode::kSupportViolation: return "SupportViolation";
    case ErrorCode::kUnknownResponse: return "UnknownResponse";
    case ErrorCode::kSameResponse: return "SameResponse";
    case ErrorCode::kDuplicateResponse: return "DuplicateResponse";
    case ErrorCode::kZeroMarginal: return "ZeroMarginal";
    case ErrorCode::kZeroMass: return "ZeroMass";
    case ErrorCode::kBoundaryPolicy: return "BoundaryPolicy";
    case ErrorCode::kNonpositiveAlpha: return "NonpositiveAlpha";
    case ErrorCode::kPreconditionViolated: return "PreconditionViolated";
    case ErrorCode::kNonfiniteGradient: return "NonfiniteGradient";
    case ErrorCode::kDivergenceDetected: return "DivergenceDetected";
    case ErrorCode::kGridTooLarge: return "GridTooLarge";
    case ErrorCode::kInvalidSequence: return "InvalidSequence";
    case ErrorCode::kEnumerationTooLarge: return "EnumerationTooLarge";
    case ErrorCode::kBoundaryTooClose: return "BoundaryTooClose";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kEmptyDirectory: return "EmptyDirectory";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
      code_(code),
      detail_(message) {}

void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace softpref
