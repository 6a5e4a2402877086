#pragma once

// CSV files with `# key: value` header comments. Reads also merge an
// optional `<file>.meta` sidecar of key=value lines. Numbers are written
// with 9 significant digits.

#include "sicmag/magnet.hpp"
#include "sicmag/metadata.hpp"
#include "sicmag/odmr.hpp"
#include "sicmag/relaxometry.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace sicmag::io {

std::string format_number(double v);

struct NumericTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> meta;  // from comments and sidecar
};

// Parses a numeric CSV whose header must equal `columns`. Errors are Parse
// errors naming `source` and the 1-based line number.
NumericTable parse_numeric_table(std::string_view text, const std::vector<std::string>& columns,
                                 std::string_view source);
std::string format_numeric_table(const NumericTable& table);

// Reads `path` and merges `path.meta` when present (sidecar keys win).
NumericTable read_numeric_table(const std::filesystem::path& path,
                                const std::vector<std::string>& columns);

std::string read_file(const std::filesystem::path& path);
// Creates parent directories; throws Io on failure.
void write_file(const std::filesystem::path& path, std::string_view content);

std::map<std::string, std::string> meta_to_map(const SampleMeta& meta);
SampleMeta meta_from_map(const std::map<std::string, std::string>& kv, std::string_view source);

std::string spectrum_to_csv(const odmr::OdmrSpectrum& spectrum);
odmr::OdmrSpectrum spectrum_from_table(const NumericTable& table, std::string_view source);
odmr::OdmrSpectrum read_spectrum(const std::filesystem::path& path);

std::string trace_to_csv(const relax::RelaxationTrace& trace);
relax::RelaxationTrace read_trace(const std::filesystem::path& path);

struct RateSeries {
  std::vector<relax::RateSample> samples;
  std::map<std::string, std::string> meta;
};
std::string rate_series_to_csv(const RateSeries& series);
RateSeries read_rate_series(const std::filesystem::path& path);

std::string tc_series_to_csv(const std::vector<magnet::TcSample>& series);
std::vector<magnet::TcSample> read_tc_series(const std::filesystem::path& path);

// Mixed text/number table for reports; cells are written verbatim.
struct TextTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};
std::string format_text_table(const TextTable& table);

}  // namespace sicmag::io
