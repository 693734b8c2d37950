#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace addinfer {

enum class ErrorCode {
  invalid_argument,
  invalid_bandwidth,
  degenerate_bandwidth,
  insufficient_local_data,
  bandwidth_too_small,
  degenerate_design,
  incompatible_fits,
  degenerate_fit,
  degenerate_test,
  loss_overflow,
  quadrature_failure,
  bandwidth_grid_too_small,
  bootstrap_failure,
  parse_error,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::invalid_bandwidth: return "invalid-bandwidth";
    case ErrorCode::degenerate_bandwidth: return "degenerate-bandwidth";
    case ErrorCode::insufficient_local_data: return "insufficient-local-data";
    case ErrorCode::bandwidth_too_small: return "bandwidth-too-small";
    case ErrorCode::degenerate_design: return "degenerate-design";
    case ErrorCode::incompatible_fits: return "incompatible-fits";
    case ErrorCode::degenerate_fit: return "degenerate-fit";
    case ErrorCode::degenerate_test: return "degenerate-test";
    case ErrorCode::loss_overflow: return "loss-overflow";
    case ErrorCode::quadrature_failure: return "quadrature-failure";
    case ErrorCode::bandwidth_grid_too_small: return "bandwidth-grid-too-small";
    case ErrorCode::bootstrap_failure: return "bootstrap-failure";
    case ErrorCode::parse_error: return "parse-error";
  }
  return "unknown";
}

//! Library error carrying a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace addinfer
