#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace sicmag {

enum class Position { Unspecified, Probe, Reference };

std::string_view to_string(Position p) noexcept;
// Accepts "probe", "reference", "ref" and "" (unspecified); throws InvalidInput otherwise.
Position parse_position(std::string_view text);

// Metadata common to ODMR spectra and relaxation traces.
struct SampleMeta {
  double temperature_k = std::numeric_limits<double>::quiet_NaN();
  double field_g = std::numeric_limits<double>::quiet_NaN();
  Position position = Position::Unspecified;
  std::optional<std::uint64_t> seed;
  // Anything else read from or written to the file header, e.g. sweep, index, pair, branch.
  std::map<std::string, std::string> extra;

  bool has_temperature() const { return temperature_k == temperature_k; }
  bool has_field() const { return field_g == field_g; }
};

}  // namespace sicmag
