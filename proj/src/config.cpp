#include "sicmag/config.hpp"

#include "sicmag/csv_io.hpp"
#include "sicmag/error.hpp"

#include <json.hpp>

#include <cmath>
#include <set>

namespace sicmag::config {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::Config, path + ": " + what);
}

// Walks one JSON object, rejecting keys that were never read.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }
  ~Node() = default;

  bool has(const std::string& key) const { return j_.contains(key) && !j_.at(key).is_null(); }
  bool present(const std::string& key) const { return j_.contains(key); }
  void mark(const std::string& key) { seen_.insert(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void number(const std::string& key, double& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(child(key), "expected a number");
    out = v.get<double>();
    if (!std::isfinite(out)) fail(child(key), "must be finite");
  }
  void boolean(const std::string& key, bool& out) {
    seen_.insert(key);
    if (!has(key)) return;
    if (!j_.at(key).is_boolean()) fail(child(key), "expected true or false");
    out = j_.at(key).get<bool>();
  }
  void text(const std::string& key, std::string& out) {
    seen_.insert(key);
    if (!has(key)) return;
    if (!j_.at(key).is_string()) fail(child(key), "expected a string");
    out = j_.at(key).get<std::string>();
  }
  void seed(const std::string& key, std::uint64_t& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) fail(child(key), "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  void branch(const std::string& key, magnet::Branch& out) {
    std::string s;
    text(key, s);
    if (s.empty()) return;
    try {
      out = magnet::parse_branch(s);
    } catch (const Error&) {
      fail(child(key), "expected 'ascending' or 'descending'");
    }
  }
  void vec3(const std::string& key, magnet::Vec3& out) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_array() || v.size() != 3) fail(child(key), "expected an array of 3 numbers");
    for (int i = 0; i < 3; ++i) {
      if (!v[static_cast<std::size_t>(i)].is_number()) {
        fail(child(key) + "[" + std::to_string(i) + "]", "expected a number");
      }
      out[i] = v[static_cast<std::size_t>(i)].get<double>();
    }
  }
  // Either an explicit array or {start, stop, count} (linear) / {first, last, count} (log).
  void grid(const std::string& key, std::vector<double>& out, bool logarithmic) {
    seen_.insert(key);
    if (!has(key)) return;
    const auto& v = j_.at(key);
    const auto p = child(key);
    if (v.is_array()) {
      out.clear();
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) fail(p + "[" + std::to_string(i) + "]", "expected a number");
        out.push_back(v[i].get<double>());
      }
      return;
    }
    Node n(v, p);
    const std::string a = logarithmic ? "first" : "start";
    const std::string b = logarithmic ? "last" : "stop";
    double lo = NAN, hi = NAN, count = NAN;
    n.number(a, lo);
    n.number(b, hi);
    n.number("count", count);
    n.finish();
    if (std::isnan(lo) || std::isnan(hi) || std::isnan(count)) {
      fail(p, "grid needs '" + a + "', '" + b + "' and 'count'");
    }
    if (count < 2 || count != std::floor(count)) fail(p + ".count", "must be an integer >= 2");
    const int c = static_cast<int>(count);
    if (logarithmic) {
      try {
        out = relax::log_delays(lo, hi, c);
      } catch (const Error& e) {
        fail(p, e.what());
      }
      return;
    }
    out.resize(static_cast<std::size_t>(c));
    for (int i = 0; i < c; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (c - 1);
    out.back() = hi;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(child(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
void section(Node& parent, const std::string& key, F&& body) {
  parent.mark(key);
  if (!parent.has(key)) return;
  Node n(parent.raw(key), parent.child(key));
  body(n);
  n.finish();
}

void wrap(const std::string& path, const auto& check) {
  try {
    check();
  } catch (const Error& e) {
    fail(path, e.what());
  }
}

json vec_json(const magnet::Vec3& v) { return json::array({v.x, v.y, v.z}); }

}  // namespace

magnet::MagnetizationModel ExperimentConfig::calibrated_magnet() const {
  if (!magnet.calibration) return magnet.model;
  const auto& c = *magnet.calibration;
  return magnet::calibrate_m_sat(magnet.model, magnet.geometry, magnet.placement, c.temperature_k,
                                 c.field_g, c.branch, c.target_g);
}

void ExperimentConfig::validate() const {
  wrap("sensor", [&] { sensor.validate(); });
  wrap("magnet.model", [&] { magnet.model.validate(); });
  for (int k = 0; k < 3; ++k) {
    const double h = magnet.geometry.half_extents_um[k];
    if (!(h > 0.0) || !std::isfinite(h)) {
      fail("magnet.geometry.half_extents_um[" + std::to_string(k) + "]", "must be positive");
    }
  }
  wrap("magnet.geometry", [&] { magnet.geometry.validate(); });
  wrap("magnet.placement", [&] { magnet.placement.validate(); });
  wrap("magnet.placement", [&] {
    const auto p = magnet::sensor_point(magnet.geometry, magnet.placement);
    if (magnet.geometry.contains(p)) throw Error(ErrorCode::InvalidInput, "sensor lies inside the flake");
  });
  if (magnet.calibration) wrap("magnet.calibration", [&] { (void)calibrated_magnet(); });

  auto positive_list = [](const std::vector<double>& v, const std::string& path) {
    if (v.empty()) fail(path, "must not be empty");
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] > 0.0)) fail(path + "[" + std::to_string(i) + "]", "must be positive");
    }
  };
  positive_list(temperature_sweep.temperatures_k, "temperature_sweep.temperatures_k");
  if (!(field_sweep.temperature_k > 0.0)) fail("field_sweep.temperature_k", "must be positive");
  if (field_sweep.descending_g.empty()) fail("field_sweep.descending_g", "must not be empty");

  const auto& s = odmr.synthesis;
  if (!(s.grid.step_mhz > 0.0)) fail("odmr.grid.step_mhz", "must be positive");
  if (!(s.grid.stop_mhz > s.grid.start_mhz)) fail("odmr.grid", "stop_mhz must exceed start_mhz");
  if (!(s.fwhm_mhz > 0.0)) fail("odmr.fwhm_mhz", "must be positive");
  if (!(s.noise_sigma >= 0.0)) fail("odmr.noise_sigma", "must be >= 0");

  positive_list(relax.temperatures_k, "relaxometry.temperatures_k");
  if (relax.delays_us.size() < 6) fail("relaxometry.delays_us", "needs at least 6 delays");
  if (!(relax.noise_sigma >= 0.0)) fail("relaxometry.noise_sigma", "must be >= 0");
  if (!(relax.amplitude > 0.0)) fail("relaxometry.amplitude", "must be positive");
  if (!(relax.n_stretch > 0.0 && relax.n_stretch <= 2.0)) fail("relaxometry.n_stretch", "must lie in (0, 2]");
  wrap("relaxometry.phonon", [&] { relax.phonon.validate(); });
  wrap("relaxometry.fluctuation", [&] { relax.fluctuation.validate(); });
  if (analysis.tc_fixed_beta && !(*analysis.tc_fixed_beta > 0.0 && *analysis.tc_fixed_beta < 1.0)) {
    fail("analysis.tc_fixed_beta", "must lie in (0, 1)");
  }
  const double tols[] = {tolerances.tc_k, tolerances.hc_g, tolerances.fluctuation_peak_k,
                         tolerances.phonon_anchor_rel, tolerances.b_fgt_calibration_g};
  for (double t : tols) {
    if (!(t >= 0.0)) fail("tolerances", "tolerances must be >= 0");
  }
  if (output_dir.empty()) fail("output_dir", "must not be empty");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.temperature_sweep.temperatures_k.resize(12);
  for (int i = 0; i < 12; ++i) {
    cfg.temperature_sweep.temperatures_k[static_cast<std::size_t>(i)] = 295.8 + (389.0 - 295.8) * i / 11.0;
  }
  cfg.temperature_sweep.temperatures_k.back() = 389.0;
  cfg.field_sweep.descending_g = {455, 300, 200, 100, 50, 20, 12.5, 7.5,
                                  -7.5, -12.5, -20, -50, -100, -200, -300, -508};
  auto& s = cfg.odmr.synthesis;
  s.grid = {20.0, 2900.0, 0.25};
  s.fwhm_mhz = 12.0;
  s.contrast = 0.01;
  s.noise_sigma = 2.5e-4;
  s.baseline = 1.0;
  s.dips = true;

  auto& r = cfg.relax;
  r.temperatures_k.resize(25);
  for (int i = 0; i < 25; ++i) r.temperatures_k[static_cast<std::size_t>(i)] = 296.0 + (393.0 - 296.0) * i / 24.0;
  r.temperatures_k.back() = 393.0;
  r.delays_us = relax::log_delays(1.0, 1000.0, 400);
  r.phonon = relax::calibrate_phonon(0.3, 400.0, 296.0, 6.2, 393.0, 22.1);
  relax::FluctuationModel f;
  f.tc_k = 360.0;
  f.width_k = 10.0;
  r.fluctuation = relax::fluctuation_with_peak(f, 10.0);
  return cfg;
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Config, source + ": invalid JSON: " + e.what());
  }
  ExperimentConfig cfg = default_config();
  Node root(doc, "");
  root.seed("seed", cfg.seed);
  root.text("output_dir", cfg.output_dir);

  section(root, "sensor", [&](Node& n) {
    n.number("d0_mhz", cfg.sensor.d0_mhz);
    n.number("dd_dt_mhz_per_k", cfg.sensor.dd_dt_mhz_per_k);
    n.number("t_ref_k", cfg.sensor.t_ref_k);
    n.number("e_mhz", cfg.sensor.e_mhz);
    n.number("gamma_mhz_per_g", cfg.sensor.gamma_mhz_per_g);
  });

  section(root, "magnet", [&](Node& n) {
    section(n, "model", [&](Node& m) {
      auto& mm = cfg.magnet.model;
      m.number("m_sat_a_per_m", mm.m_sat_a_per_m);
      m.number("tc_k", mm.tc_k);
      m.number("beta_crit", mm.beta_crit);
      m.number("hc_g", mm.hc_g);
      m.number("chi_para", mm.chi_para);
      m.number("chi_high", mm.chi_high);
    });
    section(n, "geometry", [&](Node& g) {
      g.vec3("half_extents_um", cfg.magnet.geometry.half_extents_um);
      g.vec3("center_um", cfg.magnet.geometry.center_um);
      g.vec3("direction", cfg.magnet.geometry.direction);
    });
    section(n, "placement", [&](Node& p) {
      p.number("offset_x_um", cfg.magnet.placement.offset_x_um);
      p.number("offset_y_um", cfg.magnet.placement.offset_y_um);
      p.number("depth_nm", cfg.magnet.placement.depth_nm);
    });
    // An explicit null disables the calibration.
    if (n.present("calibration") && !n.has("calibration")) cfg.magnet.calibration.reset();
    section(n, "calibration", [&](Node& k) {
      Calibration c = cfg.magnet.calibration.value_or(Calibration{});
      k.number("temperature_k", c.temperature_k);
      k.number("field_g", c.field_g);
      k.branch("branch", c.branch);
      k.number("target_g", c.target_g);
      cfg.magnet.calibration = c;
    });
  });

  section(root, "temperature_sweep", [&](Node& n) {
    n.grid("temperatures_k", cfg.temperature_sweep.temperatures_k, false);
    n.number("field_g", cfg.temperature_sweep.field_g);
    n.branch("branch", cfg.temperature_sweep.branch);
  });
  section(root, "field_sweep", [&](Node& n) {
    n.number("temperature_k", cfg.field_sweep.temperature_k);
    n.grid("descending_g", cfg.field_sweep.descending_g, false);
  });
  section(root, "odmr", [&](Node& n) {
    auto& s = cfg.odmr.synthesis;
    section(n, "grid", [&](Node& g) {
      g.number("start_mhz", s.grid.start_mhz);
      g.number("stop_mhz", s.grid.stop_mhz);
      g.number("step_mhz", s.grid.step_mhz);
    });
    n.number("fwhm_mhz", s.fwhm_mhz);
    n.number("contrast", s.contrast);
    n.number("noise_sigma", s.noise_sigma);
    n.number("baseline", s.baseline);
    n.boolean("dips", s.dips);
  });
  section(root, "relaxometry", [&](Node& n) {
    auto& r = cfg.relax;
    n.grid("temperatures_k", r.temperatures_k, false);
    n.number("field_g", r.field_g);
    n.grid("delays_us", r.delays_us, true);
    n.number("noise_sigma", r.noise_sigma);
    n.number("amplitude", r.amplitude);
    n.number("n_stretch", r.n_stretch);
    section(n, "phonon", [&](Node& p) {
      const auto path = p.child("anchors");
      p.number("a_khz", r.phonon.a_khz);
      p.number("delta_over_k", r.phonon.delta_over_k);
      if (p.has("anchors")) {
        const auto& a = p.raw("anchors");
        if (p.has("b_khz") || p.has("c_khz_per_k5")) fail(path, "give either anchors or b_khz/c_khz_per_k5");
        if (!a.is_array() || a.size() != 2 || !a[0].is_array() || !a[1].is_array() || a[0].size() != 2 ||
            a[1].size() != 2) {
          fail(path, "expected [[T1, rate1], [T2, rate2]]");
        }
        wrap(path, [&] {
          r.phonon = relax::calibrate_phonon(r.phonon.a_khz, r.phonon.delta_over_k, a[0][0].get<double>(),
                                             a[0][1].get<double>(), a[1][0].get<double>(),
                                             a[1][1].get<double>());
        });
      } else {
        p.mark("anchors");
        p.number("b_khz", r.phonon.b_khz);
        p.number("c_khz_per_k5", r.phonon.c_khz_per_k5);
      }
    });
    section(n, "fluctuation", [&](Node& f) {
      auto& fm = r.fluctuation;
      f.number("tc_k", fm.tc_k);
      f.number("width_k", fm.width_k);
      f.number("exponent_below", fm.exponent_below);
      f.number("exponent_above", fm.exponent_above);
      if (f.has("peak_khz") && f.has("amplitude_khz")) {
        fail(f.child("peak_khz"), "give either peak_khz or amplitude_khz");
      }
      if (f.has("peak_khz")) {
        double peak = 0.0;
        f.number("peak_khz", peak);
        wrap(f.child("peak_khz"), [&] { fm = relax::fluctuation_with_peak(fm, peak); });
      } else {
        f.mark("peak_khz");
        f.number("amplitude_khz", fm.amplitude_khz);
      }
    });
  });
  section(root, "analysis", [&](Node& n) {
    if (n.has("tc_fixed_beta")) {
      double b = 0.0;
      n.number("tc_fixed_beta", b);
      cfg.analysis.tc_fixed_beta = b;
    } else {
      n.mark("tc_fixed_beta");
      cfg.analysis.tc_fixed_beta.reset();
    }
  });
  section(root, "tolerances", [&](Node& n) {
    auto& t = cfg.tolerances;
    n.number("tc_k", t.tc_k);
    n.number("hc_g", t.hc_g);
    n.number("fluctuation_peak_k", t.fluctuation_peak_k);
    n.number("phonon_anchor_rel", t.phonon_anchor_rel);
    n.number("b_fgt_calibration_g", t.b_fgt_calibration_g);
  });
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(io::read_file(path), path.string());
}

std::string dump_config(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["sensor"] = {{"d0_mhz", cfg.sensor.d0_mhz},
                 {"dd_dt_mhz_per_k", cfg.sensor.dd_dt_mhz_per_k},
                 {"t_ref_k", cfg.sensor.t_ref_k},
                 {"e_mhz", cfg.sensor.e_mhz},
                 {"gamma_mhz_per_g", cfg.sensor.gamma_mhz_per_g}};
  const auto& mm = cfg.magnet.model;
  j["magnet"]["model"] = {{"m_sat_a_per_m", mm.m_sat_a_per_m}, {"tc_k", mm.tc_k},
                          {"beta_crit", mm.beta_crit},         {"hc_g", mm.hc_g},
                          {"chi_para", mm.chi_para},           {"chi_high", mm.chi_high}};
  j["magnet"]["geometry"] = {{"half_extents_um", vec_json(cfg.magnet.geometry.half_extents_um)},
                             {"center_um", vec_json(cfg.magnet.geometry.center_um)},
                             {"direction", vec_json(cfg.magnet.geometry.direction)}};
  j["magnet"]["placement"] = {{"offset_x_um", cfg.magnet.placement.offset_x_um},
                              {"offset_y_um", cfg.magnet.placement.offset_y_um},
                              {"depth_nm", cfg.magnet.placement.depth_nm}};
  if (cfg.magnet.calibration) {
    const auto& c = *cfg.magnet.calibration;
    j["magnet"]["calibration"] = {{"temperature_k", c.temperature_k},
                                  {"field_g", c.field_g},
                                  {"branch", std::string(magnet::to_string(c.branch))},
                                  {"target_g", c.target_g}};
  } else {
    j["magnet"]["calibration"] = nullptr;
  }
  j["temperature_sweep"] = {{"temperatures_k", cfg.temperature_sweep.temperatures_k},
                            {"field_g", cfg.temperature_sweep.field_g},
                            {"branch", std::string(magnet::to_string(cfg.temperature_sweep.branch))}};
  j["field_sweep"] = {{"temperature_k", cfg.field_sweep.temperature_k},
                      {"descending_g", cfg.field_sweep.descending_g}};
  const auto& s = cfg.odmr.synthesis;
  j["odmr"] = {{"grid", {{"start_mhz", s.grid.start_mhz}, {"stop_mhz", s.grid.stop_mhz}, {"step_mhz", s.grid.step_mhz}}},
               {"fwhm_mhz", s.fwhm_mhz},
               {"contrast", s.contrast},
               {"noise_sigma", s.noise_sigma},
               {"baseline", s.baseline},
               {"dips", s.dips}};
  const auto& r = cfg.relax;
  j["relaxometry"] = {
      {"temperatures_k", r.temperatures_k},
      {"field_g", r.field_g},
      {"delays_us", r.delays_us},
      {"noise_sigma", r.noise_sigma},
      {"amplitude", r.amplitude},
      {"n_stretch", r.n_stretch},
      {"phonon",
       {{"a_khz", r.phonon.a_khz},
        {"b_khz", r.phonon.b_khz},
        {"c_khz_per_k5", r.phonon.c_khz_per_k5},
        {"delta_over_k", r.phonon.delta_over_k}}},
      {"fluctuation",
       {{"amplitude_khz", r.fluctuation.amplitude_khz},
        {"tc_k", r.fluctuation.tc_k},
        {"width_k", r.fluctuation.width_k},
        {"exponent_below", r.fluctuation.exponent_below},
        {"exponent_above", r.fluctuation.exponent_above}}}};
  j["analysis"]["tc_fixed_beta"] =
      cfg.analysis.tc_fixed_beta ? json(*cfg.analysis.tc_fixed_beta) : json(nullptr);
  const auto& t = cfg.tolerances;
  j["tolerances"] = {{"tc_k", t.tc_k},
                     {"hc_g", t.hc_g},
                     {"fluctuation_peak_k", t.fluctuation_peak_k},
                     {"phonon_anchor_rel", t.phonon_anchor_rel},
                     {"b_fgt_calibration_g", t.b_fgt_calibration_g}};
  return j.dump(2) + "\n";
}

}  // namespace sicmag::config
