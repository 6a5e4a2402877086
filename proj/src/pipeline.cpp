#include "sicmag/pipeline.hpp"

#include "sicmag/error.hpp"
#include "sicmag/random.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

namespace sicmag::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string indexed(const std::string& stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "_%03zu", i);
  return stem + buf;
}

std::string fmt(double v) { return io::format_number(v); }

std::string meta_value(const SampleMeta& meta, const std::string& key) {
  const auto it = meta.extra.find(key);
  return it == meta.extra.end() ? std::string() : it->second;
}

// Runs one stage and prefixes any failure with the stage name.
template <class F>
auto stage(const std::string& name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + name + ": " + e.what());
  }
}

json check_json(const Check& c) {
  return {{"name", c.name}, {"value", c.value}, {"truth", c.truth}, {"tolerance", c.tolerance}, {"pass", c.pass}};
}

Check make_check(std::string name, double value, double truth, double tolerance) {
  Check c{std::move(name), value, truth, tolerance, false};
  c.pass = std::isfinite(value) && std::abs(value - truth) <= tolerance;
  return c;
}

void write_numeric(const fs::path& path, std::vector<std::string> columns,
                   std::vector<std::vector<double>> rows, std::map<std::string, std::string> meta = {}) {
  io::NumericTable t;
  t.columns = std::move(columns);
  t.rows = std::move(rows);
  t.meta = std::move(meta);
  io::write_file(path, io::format_numeric_table(t));
}

}  // namespace

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (i < failed_index) {
            failed_index = i;
            failure = std::current_exception();
          }
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

SimulationManifest simulate(const config::ExperimentConfig& cfg, const fs::path& out, int jobs) {
  cfg.validate();
  const auto model = cfg.calibrated_magnet();
  const auto& geom = cfg.magnet.geometry;
  const auto& place = cfg.magnet.placement;

  struct SpectrumJob {
    std::string name;
    double temperature_k;
    double field_g;
    magnet::Branch branch;
    Position position;
    std::string pair, sweep;
    std::size_t index;
  };
  std::vector<SpectrumJob> spectra;
  const auto& ts = cfg.temperature_sweep;
  for (std::size_t i = 0; i < ts.temperatures_k.size(); ++i) {
    for (auto pos : {Position::Reference, Position::Probe}) {
      const auto pair = indexed("tsweep", i);
      spectra.push_back({pair + "_" + std::string(to_string(pos)), ts.temperatures_k[i], ts.field_g, ts.branch,
                         pos, pair, "tsweep", i});
    }
  }
  std::vector<std::pair<double, magnet::Branch>> loop;
  for (double h : cfg.field_sweep.descending_g) loop.emplace_back(h, magnet::Branch::Descending);
  for (auto it = cfg.field_sweep.descending_g.rbegin(); it != cfg.field_sweep.descending_g.rend(); ++it) {
    loop.emplace_back(*it, magnet::Branch::Ascending);
  }
  for (std::size_t i = 0; i < loop.size(); ++i) {
    for (auto pos : {Position::Reference, Position::Probe}) {
      const auto pair = indexed("hsweep", i);
      spectra.push_back({pair + "_" + std::string(to_string(pos)), cfg.field_sweep.temperature_k, loop[i].first,
                         loop[i].second, pos, pair, "hsweep", i});
    }
  }

  SimulationManifest manifest;
  for (const auto& s : spectra) manifest.odmr_files.push_back(out / "odmr" / (s.name + ".csv"));
  parallel_for(spectra.size(), jobs, [&](std::size_t k) {
    const auto& s = spectra[k];
    const double bz = s.position == Position::Probe
                          ? magnet::stray_bz_at_sensor(model, geom, place, s.temperature_k, s.field_g, s.branch)
                          : 0.0;
    auto opts = cfg.odmr.synthesis;
    opts.seed = derive_seed(cfg.seed, "odmr/" + s.name, 0);
    auto spectrum = odmr::synthesize_spectrum(cfg.sensor, spin::axial_field(s.field_g + bz), s.temperature_k, opts);
    spectrum.meta.temperature_k = s.temperature_k;
    spectrum.meta.field_g = s.field_g;
    spectrum.meta.position = s.position;
    spectrum.meta.seed = opts.seed;
    spectrum.meta.extra = {{"pair", s.pair},
                           {"sweep", s.sweep},
                           {"index", std::to_string(s.index)},
                           {"branch", std::string(magnet::to_string(s.branch))}};
    io::write_file(manifest.odmr_files[k], io::spectrum_to_csv(spectrum));
  });

  const auto& rc = cfg.relax;
  struct TraceJob {
    std::string name, pair;
    std::size_t index;
    Position position;
  };
  std::vector<TraceJob> traces;
  for (std::size_t i = 0; i < rc.temperatures_k.size(); ++i) {
    for (auto pos : {Position::Reference, Position::Probe}) {
      const auto pair = indexed("relax", i);
      traces.push_back({pair + "_" + std::string(to_string(pos)), pair, i, pos});
    }
  }
  for (const auto& t : traces) manifest.relax_files.push_back(out / "relax" / (t.name + ".csv"));
  parallel_for(traces.size(), jobs, [&](std::size_t k) {
    const auto& t = traces[k];
    const double temp = rc.temperatures_k[t.index];
    double gamma = relax::phonon_rate(rc.phonon, temp);
    if (t.position == Position::Probe) gamma += relax::fluctuation_rate(rc.fluctuation, temp);
    const auto seed = derive_seed(cfg.seed, "relax/" + t.name, 0);
    auto trace = relax::synthesize_trace(gamma, rc.n_stretch, rc.amplitude, rc.delays_us, rc.noise_sigma, seed);
    trace.meta.temperature_k = temp;
    trace.meta.field_g = rc.field_g;
    trace.meta.position = t.position;
    trace.meta.extra = {{"pair", t.pair}, {"sweep", "relax"}, {"index", std::to_string(t.index)}};
    io::write_file(manifest.relax_files[k], io::trace_to_csv(trace));
  });

  io::write_file(out / "config.json", config::dump_config(cfg));
  return manifest;
}

std::vector<std::pair<std::size_t, std::size_t>> pair_spectra(const std::vector<LoadedSpectrum>& spectra) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  const bool keyed = std::any_of(spectra.begin(), spectra.end(),
                                 [](const auto& s) { return s.spectrum.meta.extra.count("pair") > 0; });
  std::vector<std::string> orphans;
  if (!keyed) {
    std::vector<std::size_t> probes, refs;
    for (std::size_t i = 0; i < spectra.size(); ++i) {
      const auto p = spectra[i].spectrum.meta.position;
      if (p == Position::Probe) {
        probes.push_back(i);
      } else if (p == Position::Reference) {
        refs.push_back(i);
      } else {
        orphans.push_back(spectra[i].name + " (no position)");
      }
    }
    if (probes.size() == 1 && refs.size() == 1 && orphans.empty()) return {{probes[0], refs[0]}};
    for (auto i : probes) orphans.push_back(spectra[i].name);
    for (auto i : refs) orphans.push_back(spectra[i].name);
  } else {
    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> groups;
    for (std::size_t i = 0; i < spectra.size(); ++i) {
      const auto& meta = spectra[i].spectrum.meta;
      const auto key = meta_value(meta, "pair");
      if (key.empty() || meta.position == Position::Unspecified) {
        orphans.push_back(spectra[i].name);
        continue;
      }
      auto& g = groups[key];
      (meta.position == Position::Probe ? g.first : g.second).push_back(i);
    }
    for (const auto& [key, g] : groups) {
      if (g.first.size() == 1 && g.second.size() == 1) {
        out.emplace_back(g.first[0], g.second[0]);
        continue;
      }
      for (auto i : g.first) orphans.push_back(spectra[i].name);
      for (auto i : g.second) orphans.push_back(spectra[i].name);
    }
  }
  if (!orphans.empty()) {
    std::string msg = "cannot pair probe and reference spectra; orphans:";
    for (const auto& o : orphans) msg += " " + o;
    throw Error(ErrorCode::Pairing, msg);
  }
  if (out.empty()) throw Error(ErrorCode::Pairing, "no probe/reference pairs found");
  return out;
}

std::vector<OdmrPairResult> fit_odmr_pairs(const std::vector<LoadedSpectrum>& spectra,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                           const spin::SensorSpinModel& sensor, int jobs) {
  std::vector<OdmrPairResult> results(pairs.size());
  parallel_for(pairs.size(), jobs, [&](std::size_t k) {
    const auto& probe = spectra[pairs[k].first];
    const auto& ref = spectra[pairs[k].second];
    auto& r = results[k];
    r.pair = meta_value(probe.spectrum.meta, "pair");
    r.probe_name = probe.name;
    r.reference_name = ref.name;
    r.meta = probe.spectrum.meta;
    try {
      r.reference = odmr::extract_field(ref.spectrum, sensor);
    } catch (const Error& e) {
      throw Error(e.code(), ref.name + ": " + e.what());
    }
    try {
      r.probe = odmr::extract_field(probe.spectrum, sensor, r.reference.d_est_mhz);
    } catch (const Error& e) {
      throw Error(e.code(), probe.name + ": " + e.what());
    }
    r.diff = odmr::differential_field(r.probe, r.reference);
  });
  return results;
}

io::TextTable odmr_table(const std::vector<OdmrPairResult>& results) {
  io::TextTable t;
  t.columns = {"pair",  "sweep",   "branch",        "temperature_k", "applied_field_g",
               "b_tot_g", "sigma_b_tot_g", "b_0_g", "sigma_b_0_g", "b_fgt_g",
               "sigma_g", "signed_difference_g", "d_est_mhz", "converged"};
  for (const auto& r : results) {
    t.rows.push_back({r.pair, meta_value(r.meta, "sweep"), meta_value(r.meta, "branch"),
                      fmt(r.meta.temperature_k), fmt(r.meta.field_g), fmt(r.probe.b_g), fmt(r.probe.sigma_b_g),
                      fmt(r.reference.b_g), fmt(r.reference.sigma_b_g), fmt(r.diff.b_fgt_g), fmt(r.diff.sigma_g),
                      fmt(r.diff.signed_difference_g), fmt(r.reference.d_est_mhz),
                      r.probe.converged && r.reference.converged ? "true" : "false"});
  }
  return t;
}

std::vector<magnet::TcSample> tc_series(const std::vector<OdmrPairResult>& results, const std::string& sweep) {
  std::vector<magnet::TcSample> out;
  for (const auto& r : results) {
    if (!sweep.empty() && meta_value(r.meta, "sweep") != sweep) continue;
    if (!r.meta.has_temperature()) continue;
    out.push_back({r.meta.temperature_k, r.diff.b_fgt_g, r.diff.sigma_g});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.temperature_k < b.temperature_k; });
  return out;
}

std::vector<LoopPoint> loop_points(const std::vector<OdmrPairResult>& results, const std::string& sweep) {
  std::vector<std::pair<long, LoopPoint>> keyed;
  for (const auto& r : results) {
    if (meta_value(r.meta, "sweep") != sweep || !r.meta.has_field()) continue;
    LoopPoint p;
    p.applied_field_g = r.meta.field_g;
    const auto branch = meta_value(r.meta, "branch");
    p.branch = branch.empty() ? magnet::Branch::Descending : magnet::parse_branch(branch);
    const double sign = p.applied_field_g > 0.0 ? 1.0 : (p.applied_field_g < 0.0 ? -1.0 : 0.0);
    p.signed_bz_g = r.diff.signed_difference_g * sign;
    const auto idx = meta_value(r.meta, "index");
    keyed.emplace_back(idx.empty() ? static_cast<long>(keyed.size()) : std::stol(idx), p);
  }
  std::stable_sort(keyed.begin(), keyed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<LoopPoint> out;
  for (const auto& [k, p] : keyed) out.push_back(p);
  return out;
}

std::optional<double> estimate_coercive_field(const std::vector<LoopPoint>& points) {
  std::vector<double> switches;
  for (auto branch : {magnet::Branch::Descending, magnet::Branch::Ascending}) {
    std::vector<const LoopPoint*> seq;
    for (const auto& p : points) {
      if (p.branch == branch && p.applied_field_g != 0.0 && p.signed_bz_g != 0.0) seq.push_back(&p);
    }
    if (seq.size() < 2) continue;
    const bool first_positive = seq.front()->signed_bz_g > 0.0;
    for (std::size_t k = 1; k < seq.size(); ++k) {
      if ((seq[k]->signed_bz_g > 0.0) != first_positive) {
        switches.push_back(std::abs(0.5 * (seq[k - 1]->applied_field_g + seq[k]->applied_field_g)));
        break;
      }
    }
  }
  if (switches.empty()) return std::nullopt;
  double sum = 0.0;
  for (double s : switches) sum += s;
  return sum / static_cast<double>(switches.size());
}

std::vector<TraceRate> fit_traces(const std::vector<std::pair<std::string, relax::RelaxationTrace>>& traces,
                                  int jobs) {
  std::vector<TraceRate> out(traces.size());
  parallel_for(traces.size(), jobs, [&](std::size_t k) {
    out[k].name = traces[k].first;
    out[k].meta = traces[k].second.meta;
    try {
      out[k].fit = relax::fit_trace(traces[k].second);
    } catch (const Error& e) {
      throw Error(e.code(), traces[k].first + ": " + e.what());
    }
  });
  return out;
}

io::TextTable rate_table(const std::vector<TraceRate>& rates) {
  io::TextTable t;
  t.columns = {"file", "pair", "position", "temperature_k", "gamma_khz", "sigma_gamma_khz",
               "n_stretch", "sigma_n", "amplitude", "converged"};
  for (const auto& r : rates) {
    t.rows.push_back({r.name, meta_value(r.meta, "pair"), std::string(to_string(r.meta.position)),
                      fmt(r.meta.temperature_k), fmt(r.fit.gamma_khz), fmt(r.fit.sigma_gamma_khz),
                      fmt(r.fit.n_stretch), fmt(r.fit.sigma_n), fmt(r.fit.amplitude),
                      r.fit.fit.converged ? "true" : "false"});
  }
  return t;
}

io::RateSeries rate_series(const std::vector<TraceRate>& rates, Position position) {
  io::RateSeries out;
  out.meta["position"] = std::string(to_string(position));
  for (const auto& r : rates) {
    if (r.meta.position != position) continue;
    if (!r.meta.has_temperature()) {
      throw Error(ErrorCode::InvalidInput, r.name + ": trace has no temperature_k metadata");
    }
    out.samples.push_back({r.meta.temperature_k, r.fit.gamma_khz, r.fit.sigma_gamma_khz});
  }
  if (out.samples.empty()) {
    throw Error(ErrorCode::Pairing, "no " + std::string(to_string(position)) + " traces in the input");
  }
  std::stable_sort(out.samples.begin(), out.samples.end(),
                   [](const auto& a, const auto& b) { return a.temperature_k < b.temperature_k; });
  return out;
}

FluctuationResult fluctuation(const io::RateSeries& probe, const io::RateSeries& reference,
                              const relax::FluctuationModel& shape) {
  FluctuationResult out;
  std::vector<bool> used(reference.samples.size(), false);
  std::vector<std::string> orphans;
  for (const auto& p : probe.samples) {
    std::size_t match = reference.samples.size();
    for (std::size_t j = 0; j < reference.samples.size(); ++j) {
      if (!used[j] && std::abs(reference.samples[j].temperature_k - p.temperature_k) <= 1e-6 * p.temperature_k) {
        match = j;
        break;
      }
    }
    if (match == reference.samples.size()) {
      orphans.push_back("probe@" + fmt(p.temperature_k) + "K");
      continue;
    }
    used[match] = true;
    const auto& r = reference.samples[match];
    const auto d = relax::differential_rate(p.rate_khz, r.rate_khz, p.sigma_khz, r.sigma_khz);
    out.diffs.push_back(d);
    out.gamma_fgt.push_back({p.temperature_k, d.gamma_fgt_khz, d.sigma_khz});
  }
  for (std::size_t j = 0; j < used.size(); ++j) {
    if (!used[j]) orphans.push_back("reference@" + fmt(reference.samples[j].temperature_k) + "K");
  }
  if (!orphans.empty()) {
    std::string msg = "cannot pair probe and reference rates; orphans:";
    for (const auto& o : orphans) msg += " " + o;
    throw Error(ErrorCode::Pairing, msg);
  }
  out.fit = relax::fit_fluctuation_model(out.gamma_fgt, shape);
  return out;
}

std::vector<std::vector<double>> curve_rows(double t_lo, double t_hi, int count,
                                            const std::function<double(double)>& f) {
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < count; ++i) {
    const double t = t_lo + (t_hi - t_lo) * i / std::max(1, count - 1);
    rows.push_back({t, f(t)});
  }
  return rows;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string provenance_hash(const std::string& config_dump, const std::vector<fs::path>& files) {
  std::uint64_t h = fnv1a64(config_dump);
  for (const auto& f : files) {
    h = fnv1a64(f.filename().string(), h);
    h = fnv1a64(io::read_file(f), h);
  }
  return hex64(h);
}

ReproduceResult reproduce(const config::ExperimentConfig& cfg, const fs::path& out, int jobs) {
  const auto manifest = stage("simulate", [&] { return simulate(cfg, out, jobs); });
  const auto model = cfg.calibrated_magnet();
  const auto plots = out / "plots";

  // ODMR magnetometry.
  const auto odmr_results = stage("fit-odmr", [&] {
    std::vector<LoadedSpectrum> spectra(manifest.odmr_files.size());
    parallel_for(spectra.size(), jobs, [&](std::size_t k) {
      spectra[k] = {manifest.odmr_files[k].filename().string(), io::read_spectrum(manifest.odmr_files[k])};
    });
    auto res = fit_odmr_pairs(spectra, pair_spectra(spectra), cfg.sensor, jobs);
    io::write_file(out / "odmr_fields.csv", io::format_text_table(odmr_table(res)));
    return res;
  });

  const auto series = tc_series(odmr_results, "tsweep");
  const auto tc = stage("estimate-tc", [&] {
    magnet::TcOptions opts;
    opts.fixed_beta = cfg.analysis.tc_fixed_beta;
    auto est = magnet::estimate_tc(series, opts);
    io::write_file(plots / "b_fgt_vs_temperature.csv", io::tc_series_to_csv(series));
    write_numeric(plots / "tc_fit_curve.csv", {"temperature_k", "b_fgt_g"},
                  curve_rows(series.front().temperature_k, series.back().temperature_k, 200, [&](double t) {
                    return magnet::critical_curve(t, est.b0_scale_g, est.tc_k, est.beta_crit);
                  }));
    return est;
  });

  double max_dev = 0.0;
  for (const auto& s : series) {
    const double predicted = magnet::field_at_sensor(model, cfg.magnet.geometry, cfg.magnet.placement,
                                                     s.temperature_k, cfg.temperature_sweep.field_g,
                                                     cfg.temperature_sweep.branch);
    max_dev = std::max(max_dev, std::abs(s.b_fgt_g - predicted));
  }

  const auto loop = loop_points(odmr_results, "hsweep");
  const auto hc = stage("coercive-field", [&] {
    io::TextTable t;
    t.columns = {"applied_field_g", "branch", "signed_bz_g"};
    for (const auto& p : loop) {
      t.rows.push_back({fmt(p.applied_field_g), std::string(magnet::to_string(p.branch)), fmt(p.signed_bz_g)});
    }
    io::write_file(plots / "b_fgt_vs_field.csv", io::format_text_table(t));
    return estimate_coercive_field(loop);
  });

  // Relaxometry.
  const auto rates = stage("fit-relax", [&] {
    std::vector<std::pair<std::string, relax::RelaxationTrace>> traces(manifest.relax_files.size());
    parallel_for(traces.size(), jobs, [&](std::size_t k) {
      traces[k] = {manifest.relax_files[k].filename().string(), io::read_trace(manifest.relax_files[k])};
    });
    auto res = fit_traces(traces, jobs);
    io::write_file(out / "relax_rates.csv", io::format_text_table(rate_table(res)));
    return res;
  });
  const auto gamma_p = rate_series(rates, Position::Probe);
  const auto gamma_r = rate_series(rates, Position::Reference);
  io::write_file(plots / "gamma_p.csv", io::rate_series_to_csv(gamma_p));
  io::write_file(plots / "gamma_r.csv", io::rate_series_to_csv(gamma_r));

  const double t_lo = gamma_r.samples.front().temperature_k;
  const double t_hi = gamma_r.samples.back().temperature_k;
  const auto phonon = stage("fit-phonon", [&] {
    auto fit = relax::fit_phonon_model(gamma_r.samples);
    write_numeric(plots / "phonon_fit_curve.csv", {"temperature_k", "rate_khz"},
                  curve_rows(t_lo, t_hi, 200, [&](double t) { return relax::phonon_rate(fit.params, t); }));
    return fit;
  });

  const auto fluct = stage("fluctuation", [&] {
    relax::FluctuationModel shape = cfg.relax.fluctuation;
    auto res = fluctuation(gamma_p, gamma_r, shape);
    io::RateSeries s;
    s.meta["quantity"] = "gamma_fgt";
    s.samples = res.gamma_fgt;
    io::write_file(plots / "gamma_fgt.csv", io::rate_series_to_csv(s));
    write_numeric(plots / "fluctuation_fit_curve.csv", {"temperature_k", "rate_khz"},
                  curve_rows(t_lo, t_hi, 200, [&](double t) { return relax::fluctuation_rate(res.fit.model, t); }));
    return res;
  });

  ReproduceResult result;
  const auto& tol = cfg.tolerances;
  result.checks.push_back(make_check("tc_fit_k", tc.tc_k, model.tc_k, tol.tc_k));
  result.checks.push_back(make_check("b_fgt_model_max_dev_g", max_dev, 0.0, tol.b_fgt_calibration_g));
  result.checks.push_back(make_check("coercive_field_g", hc.value_or(std::numeric_limits<double>::quiet_NaN()),
                                     model.hc_g, tol.hc_g));
  const double truth_lo = relax::phonon_rate(cfg.relax.phonon, t_lo);
  const double truth_hi = relax::phonon_rate(cfg.relax.phonon, t_hi);
  result.checks.push_back(make_check("phonon_rate_low_khz", relax::phonon_rate(phonon.params, t_lo), truth_lo,
                                     tol.phonon_anchor_rel * truth_lo));
  result.checks.push_back(make_check("phonon_rate_high_khz", relax::phonon_rate(phonon.params, t_hi), truth_hi,
                                     tol.phonon_anchor_rel * truth_hi));
  result.checks.push_back(
      make_check("fluctuation_peak_k", fluct.fit.peak_t_k, cfg.relax.fluctuation.tc_k, tol.fluctuation_peak_k));
  result.all_pass = std::all_of(result.checks.begin(), result.checks.end(), [](const auto& c) { return c.pass; });

  json report;
  report["tool"] = "sicmag";
  report["version"] = kToolVersion;
  std::vector<fs::path> inputs = manifest.odmr_files;
  inputs.insert(inputs.end(), manifest.relax_files.begin(), manifest.relax_files.end());
  json files = json::array();
  for (const auto& f : inputs) {
    files.push_back({{"file", fs::relative(f, out).generic_string()}, {"fnv1a64", hex64(fnv1a64(io::read_file(f)))}});
  }
  const auto dump = config::dump_config(cfg);
  report["provenance"] = {{"config_hash", hex64(fnv1a64(dump))},
                          {"input_hash", provenance_hash(dump, inputs)},
                          {"seed", cfg.seed},
                          {"inputs", files}};
  json odmr_rows = json::array();
  for (const auto& r : odmr_results) {
    odmr_rows.push_back({{"pair", r.pair},
                         {"sweep", meta_value(r.meta, "sweep")},
                         {"branch", meta_value(r.meta, "branch")},
                         {"temperature_k", r.meta.temperature_k},
                         {"applied_field_g", r.meta.field_g},
                         {"b_tot_g", r.probe.b_g},
                         {"sigma_b_tot_g", r.probe.sigma_b_g},
                         {"b_0_g", r.reference.b_g},
                         {"sigma_b_0_g", r.reference.sigma_b_g},
                         {"b_fgt_g", r.diff.b_fgt_g},
                         {"sigma_b_fgt_g", r.diff.sigma_g},
                         {"probe_file", r.probe_name},
                         {"reference_file", r.reference_name}});
  }
  report["odmr"] = odmr_rows;
  json relax_rows = json::array();
  for (std::size_t i = 0; i < fluct.gamma_fgt.size(); ++i) {
    relax_rows.push_back({{"temperature_k", fluct.gamma_fgt[i].temperature_k},
                          {"gamma_p_khz", gamma_p.samples[i].rate_khz},
                          {"sigma_gamma_p_khz", gamma_p.samples[i].sigma_khz},
                          {"gamma_r_khz", gamma_r.samples[i].rate_khz},
                          {"sigma_gamma_r_khz", gamma_r.samples[i].sigma_khz},
                          {"gamma_fgt_khz", fluct.gamma_fgt[i].rate_khz},
                          {"sigma_gamma_fgt_khz", fluct.gamma_fgt[i].sigma_khz},
                          {"noise_consistent", fluct.diffs[i].noise_consistent}});
  }
  report["relaxometry"] = relax_rows;
  report["summary"] = {{"tc_fit_k", tc.tc_k},
                       {"tc_sigma_k", tc.fit.std_errors.size() > 1 ? tc.fit.std_errors[1] : 0.0},
                       {"tc_beta", tc.beta_crit},
                       {"tc_b0_scale_g", tc.b0_scale_g},
                       {"tc_steepest_k", tc.tc_steepest_k},
                       {"tc_extrapolated", tc.extrapolated},
                       {"tc_fluctuation_peak_k", fluct.fit.peak_t_k},
                       {"coercive_field_g", hc ? json(*hc) : json(nullptr)},
                       {"phonon",
                        {{"a_khz", phonon.params.a_khz},
                         {"b_khz", phonon.params.b_khz},
                         {"c_khz_per_k5", phonon.params.c_khz_per_k5},
                         {"delta_over_k", phonon.params.delta_over_k},
                         {"delta_mev", phonon.params.delta_mev()}}},
                       {"calibrated_m_sat_a_per_m", model.m_sat_a_per_m}};
  json checks = json::array();
  for (const auto& c : result.checks) checks.push_back(check_json(c));
  report["checks"] = checks;
  report["pass"] = result.all_pass;
  io::write_file(out / "report.json", report.dump(2) + "\n");
  result.report = std::move(report);
  return result;
}

}  // namespace sicmag::pipeline
