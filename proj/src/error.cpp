// SPDX-License-Identifier: Apache-2.0
#include "eqdp/error.hpp"

namespace eqdp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kLayoutMismatch: return "layout-mismatch";
    case ErrorCode::kNumericFault: return "numeric-fault";
    case ErrorCode::kFormatError: return "format-error";
    case ErrorCode::kUnsupportedLayout: return "unsupported-layout";
    case ErrorCode::kUnsupportedDtype: return "unsupported-dtype";
    case ErrorCode::kNotFound: return "not-found";
    case ErrorCode::kValidationError: return "validation-error";
    case ErrorCode::kCalibrationFailure: return "calibration-failure";
    case ErrorCode::kInfinitePrivacyLoss: return "infinite-privacy-loss";
    case ErrorCode::kBudgetExhausted: return "budget-exhausted";
    case ErrorCode::kIoError: return "io-error";
  }
  return "unknown";
}

}  // namespace eqdp
