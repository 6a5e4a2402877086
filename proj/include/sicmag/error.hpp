#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sicmag {

enum class ErrorCode {
  InvalidInput,
  Evaluation,
  ModelRange,
  DegenerateRegime,
  Initialization,
  Domain,
  NoTransition,
  NoPeak,
  Pairing,
  Parse,
  Io,
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

// Single exception type for the toolkit; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sicmag
