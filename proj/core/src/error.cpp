#include "ioc/error.hpp"

namespace ioc {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidProblem: return "InvalidProblem";
    case ErrorCode::kNotStabilizable: return "NotStabilizable";
    case ErrorCode::kNoStabilizingSolution: return "NoStabilizingSolution";
    case ErrorCode::kGridTooCoarse: return "GridTooCoarse";
    case ErrorCode::kNotRealMode: return "NotRealMode";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kCallbackFailure: return "CallbackFailure";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kNonUniformGrid: return "NonUniformGrid";
    case ErrorCode::kDivergence: return "Divergence";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kAllKnown: return "AllKnown";
    case ErrorCode::kNotApplicable: return "NotApplicable";
    case ErrorCode::kNotSecondOrder: return "NotSecondOrder";
  }
  return "Unknown";
}

}  // namespace ioc
