#include "sicmag/error.hpp"

namespace sicmag {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidInput: return "invalid-input";
    case ErrorCode::Evaluation: return "evaluation";
    case ErrorCode::ModelRange: return "model-range";
    case ErrorCode::DegenerateRegime: return "degenerate-regime";
    case ErrorCode::Initialization: return "initialization";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::NoTransition: return "no-transition";
    case ErrorCode::NoPeak: return "no-peak";
    case ErrorCode::Pairing: return "pairing";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
  }
  return "unknown";
}

}  // namespace sicmag
