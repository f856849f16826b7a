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

#ifndef SOFTPREF_ERROR_HPP_
#define SOFTPREF_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace softpref {

enum class ErrorCode {
  kEmptyInput,
  kTiedArgmax,
  kDimensionMismatch,
  kInvalidDistribution,
  kSupportViolation,
  kUnknownResponse,
  kSameResponse,
  kDuplicateResponse,
  kZeroMarginal,
  kZeroMass,
  kBoundaryPolicy,
  kNonpositiveAlpha,
  kPreconditionViolated,
  kNonfiniteGradient,
  kDivergenceDetected,
  kGridTooLarge,
  kInvalidSequence,
  kEnumerationTooLarge,
  kBoundaryTooClose,
  kParseError,
  kInvalidConfig,
  kEmptyDirectory,
  kIoError,
};

std::string_view ErrorCodeName(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }
  // The message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] void Fail(ErrorCode code, const std::string& message);

}  // namespace softpref

#endif  // SOFTPREF_ERROR_HPP_
