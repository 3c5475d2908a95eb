#include "swm/error.hpp"

namespace swm {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kDomain: return "domain_error";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kVersion: return "version_error";
    case ErrorCode::kConfig: return "config_error";
    case ErrorCode::kContract: return "contract_error";
    case ErrorCode::kFitting: return "fitting_error";
    case ErrorCode::kScoring: return "scoring_error";
    case ErrorCode::kState: return "state_error";
    case ErrorCode::kBudget: return "budget_error";
    case ErrorCode::kNumeric: return "numeric_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "unknown_error";
}

}  // namespace swm
