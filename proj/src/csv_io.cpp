#include "sicmag/csv_io.hpp"

#include "sicmag/error.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace sicmag::io {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void parse_error(std::string_view source, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::Parse,
              std::string(source) + ":" + std::to_string(line) + ": " + what);
}

double parse_double(std::string_view cell, std::string_view source, std::size_t line) {
  const std::string text(cell);
  if (text.empty()) parse_error(source, line, "empty numeric field");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size() || errno == ERANGE || !std::isfinite(v)) {
    parse_error(source, line, "cannot parse '" + text + "' as a number");
  }
  return v;
}

std::string join_columns(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

std::string format_meta(const std::map<std::string, std::string>& meta) {
  std::string out;
  for (const auto& [k, v] : meta) out += "# " + k + ": " + v + "\n";
  return out;
}

double meta_double(const std::map<std::string, std::string>& kv, const std::string& key,
                   std::string_view source) {
  const auto it = kv.find(key);
  if (it == kv.end()) return std::numeric_limits<double>::quiet_NaN();
  const std::string& text = it->second;
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw Error(ErrorCode::Parse, std::string(source) + ": metadata '" + key + "' is not a number");
  }
  return v;
}

}  // namespace

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

NumericTable parse_numeric_table(std::string_view text, const std::vector<std::string>& columns,
                                 std::string_view source) {
  NumericTable table;
  table.columns = columns;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      const auto body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string_view::npos) {
        table.meta[std::string(trim(body.substr(0, colon)))] = std::string(trim(body.substr(colon + 1)));
      }
      continue;
    }
    const auto cells = split(line, ',');
    if (!have_header) {
      std::vector<std::string> header(cells.begin(), cells.end());
      if (header != columns) {
        parse_error(source, line_no,
                    "expected header '" + join_columns(columns) + "', got '" + std::string(line) + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != columns.size()) {
      parse_error(source, line_no,
                  "expected " + std::to_string(columns.size()) + " fields, got " +
                      std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto cell : cells) row.push_back(parse_double(cell, source, line_no));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) parse_error(source, line_no, "missing header '" + join_columns(columns) + "'");
  return table;
}

std::string format_numeric_table(const NumericTable& table) {
  std::string out = format_meta(table.meta);
  out += join_columns(table.columns) + "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + format_number(row[i]);
    out += "\n";
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write '" + path.string() + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

NumericTable read_numeric_table(const std::filesystem::path& path,
                                const std::vector<std::string>& columns) {
  auto table = parse_numeric_table(read_file(path), columns, path.string());
  auto sidecar = path;
  sidecar += ".meta";
  if (std::filesystem::exists(sidecar)) {
    const auto text = read_file(sidecar);
    std::istringstream lines(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(lines, line)) {
      ++line_no;
      const auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos) {
        parse_error(sidecar.string(), line_no, "expected key=value");
      }
      table.meta[std::string(trim(t.substr(0, eq)))] = std::string(trim(t.substr(eq + 1)));
    }
  }
  return table;
}

std::map<std::string, std::string> meta_to_map(const SampleMeta& meta) {
  auto out = meta.extra;
  if (meta.has_temperature()) out["temperature_k"] = format_number(meta.temperature_k);
  if (meta.has_field()) out["field_g"] = format_number(meta.field_g);
  if (meta.position != Position::Unspecified) out["position"] = std::string(to_string(meta.position));
  if (meta.seed) out["seed"] = std::to_string(*meta.seed);
  return out;
}

SampleMeta meta_from_map(const std::map<std::string, std::string>& kv, std::string_view source) {
  SampleMeta meta;
  for (const auto& [k, v] : kv) {
    if (k == "temperature_k" || k == "field_g" || k == "seed") continue;
    if (k == "position") {
      try {
        meta.position = parse_position(v);
      } catch (const Error& e) {
        throw Error(ErrorCode::Parse, std::string(source) + ": " + e.what());
      }
      continue;
    }
    meta.extra[k] = v;
  }
  meta.temperature_k = meta_double(kv, "temperature_k", source);
  meta.field_g = meta_double(kv, "field_g", source);
  if (const auto it = kv.find("seed"); it != kv.end()) {
    char* end = nullptr;
    const auto s = std::strtoull(it->second.c_str(), &end, 10);
    if (it->second.empty() || end != it->second.c_str() + it->second.size()) {
      throw Error(ErrorCode::Parse, std::string(source) + ": metadata 'seed' is not an integer");
    }
    meta.seed = s;
  }
  return meta;
}

std::string spectrum_to_csv(const odmr::OdmrSpectrum& spectrum) {
  NumericTable t;
  t.columns = {"freq_mhz", "signal"};
  t.meta = meta_to_map(spectrum.meta);
  for (std::size_t i = 0; i < spectrum.frequencies_mhz.size(); ++i) {
    t.rows.push_back({spectrum.frequencies_mhz[i], spectrum.signal[i]});
  }
  return format_numeric_table(t);
}

odmr::OdmrSpectrum spectrum_from_table(const NumericTable& table, std::string_view source) {
  odmr::OdmrSpectrum s;
  s.meta = meta_from_map(table.meta, source);
  for (const auto& r : table.rows) {
    s.frequencies_mhz.push_back(r[0]);
    s.signal.push_back(r[1]);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, std::string(source) + ": " + e.what());
  }
  return s;
}

odmr::OdmrSpectrum read_spectrum(const std::filesystem::path& path) {
  return spectrum_from_table(read_numeric_table(path, {"freq_mhz", "signal"}), path.string());
}

std::string trace_to_csv(const relax::RelaxationTrace& trace) {
  NumericTable t;
  t.columns = {"delay_us", "signal"};
  t.meta = meta_to_map(trace.meta);
  for (std::size_t i = 0; i < trace.delays_us.size(); ++i) {
    t.rows.push_back({trace.delays_us[i], trace.signal[i]});
  }
  return format_numeric_table(t);
}

relax::RelaxationTrace read_trace(const std::filesystem::path& path) {
  const auto table = read_numeric_table(path, {"delay_us", "signal"});
  relax::RelaxationTrace trace;
  trace.meta = meta_from_map(table.meta, path.string());
  for (const auto& r : table.rows) {
    trace.delays_us.push_back(r[0]);
    trace.signal.push_back(r[1]);
  }
  try {
    trace.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
  }
  return trace;
}

std::string rate_series_to_csv(const RateSeries& series) {
  NumericTable t;
  t.columns = {"temperature_k", "rate_khz", "sigma_khz"};
  t.meta = series.meta;
  for (const auto& s : series.samples) t.rows.push_back({s.temperature_k, s.rate_khz, s.sigma_khz});
  return format_numeric_table(t);
}

RateSeries read_rate_series(const std::filesystem::path& path) {
  const auto table = read_numeric_table(path, {"temperature_k", "rate_khz", "sigma_khz"});
  RateSeries out;
  out.meta = table.meta;
  for (const auto& r : table.rows) out.samples.push_back({r[0], r[1], r[2]});
  return out;
}

std::string tc_series_to_csv(const std::vector<magnet::TcSample>& series) {
  NumericTable t;
  t.columns = {"temperature_k", "b_fgt_g", "sigma_g"};
  for (const auto& s : series) t.rows.push_back({s.temperature_k, s.b_fgt_g, s.sigma_g});
  return format_numeric_table(t);
}

std::vector<magnet::TcSample> read_tc_series(const std::filesystem::path& path) {
  const auto table = read_numeric_table(path, {"temperature_k", "b_fgt_g", "sigma_g"});
  std::vector<magnet::TcSample> out;
  for (const auto& r : table.rows) out.push_back({r[0], r[1], r[2]});
  return out;
}

std::string format_text_table(const TextTable& table) {
  std::string out = join_columns(table.columns) + "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += "\n";
  }
  return out;
}

}  // namespace sicmag::io
