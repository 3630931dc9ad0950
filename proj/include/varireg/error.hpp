#ifndef VARIREG_ERROR_HPP
#define VARIREG_ERROR_HPP

#include <optional>
#include <stdexcept>
#include <string>

namespace varireg {

enum class ErrorCode {
  InvalidCurve,
  ZeroVariation,
  EmptySample,
  EmptyWindow,
  SingularFit,
  AllCandidatesSingular,
  NonMonotoneInput,
  NonSymmetric,
  GridMismatch,
  NotRankOne,
  InvalidConfig,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidCurve: return "InvalidCurve";
    case ErrorCode::ZeroVariation: return "ZeroVariation";
    case ErrorCode::EmptySample: return "EmptySample";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::SingularFit: return "SingularFit";
    case ErrorCode::AllCandidatesSingular: return "AllCandidatesSingular";
    case ErrorCode::NonMonotoneInput: return "NonMonotoneInput";
    case ErrorCode::NonSymmetric: return "NonSymmetric";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::NotRankOne: return "NotRankOne";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

/// Library exception. `curve` names the offending sample index when known;
/// `where` carries the offending abscissa for window/fit failures.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what,
        std::optional<std::size_t> curve = std::nullopt,
        std::optional<double> where = std::nullopt)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code), curve_(curve), where_(where) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> curve() const noexcept { return curve_; }
  std::optional<double> where() const noexcept { return where_; }

  Error with_curve(std::size_t index) const {
    Error e(*this);
    e.curve_ = index;
    return e;
  }

 private:
  ErrorCode code_;
  std::optional<std::size_t> curve_;
  std::optional<double> where_;
};

}  // namespace varireg

#endif  // VARIREG_ERROR_HPP
