#include "sicmag/metadata.hpp"

#include "sicmag/error.hpp"

#include <string>

namespace sicmag {

std::string_view to_string(Position p) noexcept {
  switch (p) {
    case Position::Probe: return "probe";
    case Position::Reference: return "reference";
    case Position::Unspecified: break;
  }
  return "";
}

Position parse_position(std::string_view text) {
  if (text == "probe") return Position::Probe;
  if (text == "reference" || text == "ref") return Position::Reference;
  if (text.empty()) return Position::Unspecified;
  throw Error(ErrorCode::InvalidInput, "unknown position label '" + std::string(text) + "'");
}

}  // namespace sicmag
