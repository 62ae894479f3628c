// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eqdp {

enum class ErrorCode {
  kInvalidArgument = 1,
  kLayoutMismatch,
  kNumericFault,
  kFormatError,
  kUnsupportedLayout,
  kUnsupportedDtype,
  kNotFound,
  kValidationError,
  kCalibrationFailure,
  kInfinitePrivacyLoss,
  kBudgetExhausted,
  kIoError,
};

// Stable kebab-case name, used in CLI error JSON and the C API.
std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace eqdp
