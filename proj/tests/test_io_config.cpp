#include "sicmag/config.hpp"
#include "sicmag/csv_io.hpp"
#include "sicmag/error.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <string>

using namespace sicmag;
namespace fs = std::filesystem;

namespace {

Error error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e;
  }
  FAIL("expected an error");
  return Error(ErrorCode::InvalidInput, "");
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sicmag_unit";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("numbers are written with nine significant digits") {
  CHECK(io::format_number(1.0) == "1");
  CHECK(io::format_number(0.1234567891234) == "0.123456789");
  CHECK(io::format_number(295.8) == "295.8");
  CHECK(std::stod(io::format_number(1351.0 + 1e-7)) == doctest::Approx(1351.0));
}

TEST_CASE("numeric table parse with header comments") {
  const auto t = io::parse_numeric_table("# temperature_k: 300\n# position: probe\nfreq_mhz,signal\n1,0.5\n2,0.25\n",
                                         {"freq_mhz", "signal"}, "x.csv");
  CHECK(t.rows.size() == 2);
  CHECK(t.rows[1][1] == 0.25);
  CHECK(t.meta.at("temperature_k") == "300");
  CHECK(t.meta.at("position") == "probe");
}

TEST_CASE("malformed rows report the line number") {
  const auto e = error_of([] {
    io::parse_numeric_table("freq_mhz,signal\n1,0.5\n2,abc\n", {"freq_mhz", "signal"}, "bad.csv");
  });
  CHECK(e.code() == ErrorCode::Parse);
  CHECK(std::string(e.what()).find("bad.csv:3") != std::string::npos);
  const auto h = error_of([] { io::parse_numeric_table("f,s\n1,2\n", {"freq_mhz", "signal"}, "h.csv"); });
  CHECK(h.code() == ErrorCode::Parse);
  const auto w = error_of([] { io::parse_numeric_table("freq_mhz,signal\n1\n", {"freq_mhz", "signal"}, "w.csv"); });
  CHECK(std::string(w.what()).find("w.csv:2") != std::string::npos);
}

TEST_CASE("spectrum round trip through disk") {
  odmr::OdmrSpectrum s;
  s.frequencies_mhz = {1000.0, 1000.25, 1000.5};
  s.signal = {1.0, 0.99, 0.9876543219};
  s.meta.temperature_k = 295.8;
  s.meta.field_g = 200.0;
  s.meta.position = Position::Reference;
  s.meta.seed = 12345678901234567ULL;
  s.meta.extra["pair"] = "p1";
  const auto path = scratch("spec.csv");
  io::write_file(path, io::spectrum_to_csv(s));
  const auto back = io::read_spectrum(path);
  CHECK(back.frequencies_mhz == s.frequencies_mhz);
  CHECK(back.signal[2] == doctest::Approx(0.987654322).epsilon(1e-12));
  CHECK(back.meta.temperature_k == 295.8);
  CHECK(back.meta.position == Position::Reference);
  CHECK(back.meta.seed == s.meta.seed);
  CHECK(back.meta.extra.at("pair") == "p1");
  CHECK(io::spectrum_to_csv(back) == io::spectrum_to_csv(s));
}

TEST_CASE("sidecar metadata overrides header comments") {
  const auto path = scratch("side.csv");
  io::write_file(path, "# position: probe\ndelay_us,signal\n1,1\n2,0.9\n");
  io::write_file(fs::path(path.string() + ".meta"), "position=reference\ntemperature_k = 350\n");
  const auto tr = io::read_trace(path);
  CHECK(tr.meta.position == Position::Reference);
  CHECK(tr.meta.temperature_k == 350.0);
  fs::remove(fs::path(path.string() + ".meta"));
}

TEST_CASE("rate and Tc series round trip") {
  io::RateSeries rs;
  rs.samples = {{296.0, 6.2, 0.1}, {393.0, 22.1, 0.3}};
  rs.meta["position"] = "probe";
  const auto p = scratch("rates.csv");
  io::write_file(p, io::rate_series_to_csv(rs));
  const auto back = io::read_rate_series(p);
  REQUIRE(back.samples.size() == 2);
  CHECK(back.samples[1].rate_khz == 22.1);
  CHECK(back.meta.at("position") == "probe");

  const std::vector<magnet::TcSample> tc{{295.8, 3.2, 0.1}, {360.0, 0.0, 0.1}};
  const auto q = scratch("tc.csv");
  io::write_file(q, io::tc_series_to_csv(tc));
  const auto tb = io::read_tc_series(q);
  CHECK(tb[0].b_fgt_g == 3.2);
  CHECK(tb[1].temperature_k == 360.0);
}

TEST_CASE("missing files are IO errors") {
  CHECK(error_of([] { io::read_file("/nonexistent/sicmag.csv"); }).code() == ErrorCode::Io);
}

TEST_CASE("metadata position labels") {
  CHECK(parse_position("ref") == Position::Reference);
  CHECK(parse_position("probe") == Position::Probe);
  CHECK(parse_position("") == Position::Unspecified);
  CHECK_THROWS_AS(parse_position("elsewhere"), Error);
  CHECK(error_of([] { io::meta_from_map({{"temperature_k", "warm"}}, "m"); }).code() == ErrorCode::Parse);
}

TEST_CASE("default config validates and round trips through its dump") {
  const auto cfg = config::default_config();
  CHECK_NOTHROW(cfg.validate());
  const auto dump = config::dump_config(cfg);
  const auto again = config::parse_config(dump, "dump");
  CHECK(config::dump_config(again) == dump);
  CHECK(cfg.temperature_sweep.temperatures_k.size() == 12);
  CHECK(cfg.temperature_sweep.temperatures_k.front() == 295.8);
}

TEST_CASE("shipped default config matches the built-in defaults") {
  const auto cfg = config::load_config(fs::path(SICMAG_SOURCE_DIR) / "configs" / "default.json");
  CHECK(config::dump_config(cfg) == config::dump_config(config::default_config()));
}

TEST_CASE("config errors name the offending key") {
  auto e = error_of([] { config::parse_config(R"({"magnet": {"geometry": {"half_extents_um": [5, 5, 0]}}})"); });
  CHECK(e.code() == ErrorCode::Config);
  CHECK(std::string(e.what()).find("magnet.geometry.half_extents_um[2]") != std::string::npos);
  e = error_of([] { config::parse_config(R"({"sensor": {"d0": 1351}})"); });
  CHECK(std::string(e.what()).find("sensor.d0") != std::string::npos);
  e = error_of([] { config::parse_config(R"({"seed": "abc"})"); });
  CHECK(e.code() == ErrorCode::Config);
  e = error_of([] { config::parse_config("{not json"); });
  CHECK(e.code() == ErrorCode::Config);
}

TEST_CASE("config grids and alternative forms") {
  const auto cfg = config::parse_config(R"({
    "temperature_sweep": {"temperatures_k": {"start": 300, "stop": 380, "count": 5}},
    "relaxometry": {"delays_us": {"first": 1, "last": 100000, "count": 6},
                    "phonon": {"a_khz": 0.5, "anchors": [[300, 7], [390, 20]]},
                    "fluctuation": {"tc_k": 350, "width_k": 8, "peak_khz": 5}},
    "magnet": {"calibration": null},
    "analysis": {"tc_fixed_beta": 0.5}
  })");
  CHECK(cfg.temperature_sweep.temperatures_k == std::vector<double>{300, 320, 340, 360, 380});
  CHECK(cfg.relax.delays_us[1] == doctest::Approx(10.0));
  CHECK(relax::phonon_rate(cfg.relax.phonon, 390.0) == doctest::Approx(20.0));
  CHECK(relax::fluctuation_rate(cfg.relax.fluctuation, 350.0) == doctest::Approx(5.0));
  CHECK_FALSE(cfg.magnet.calibration.has_value());
  CHECK(cfg.analysis.tc_fixed_beta == 0.5);
  CHECK(cfg.calibrated_magnet().m_sat_a_per_m == cfg.magnet.model.m_sat_a_per_m);
}

TEST_CASE("zero-size flake fails validation") {
  auto cfg = config::default_config();
  cfg.magnet.geometry.half_extents_um.x = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("text tables") {
  io::TextTable t{{"a", "b"}, {{"1", "x"}, {"2", "y"}}};
  CHECK(io::format_text_table(t) == "a,b\n1,x\n2,y\n");
}
