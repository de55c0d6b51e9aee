#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ioc {

enum class ErrorCode {
  kInvalidProblem,
  kNotStabilizable,
  kNoStabilizingSolution,
  kGridTooCoarse,
  kNotRealMode,
  kDimensionMismatch,
  kCallbackFailure,
  kTooFewSamples,
  kParseError,
  kNonUniformGrid,
  kDivergence,
  kDiverged,
  kAllKnown,
  kNotApplicable,
  kNotSecondOrder,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so that
/// callers (the CLI in particular) can map it to a report entry or exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ioc
