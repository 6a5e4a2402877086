// sicmag command-line front end.

#include "sicmag/config.hpp"
#include "sicmag/csv_io.hpp"
#include "sicmag/error.hpp"
#include "sicmag/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sicmag;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out;
  std::string format = "csv";
};

config::ExperimentConfig load(const Globals& g) {
  auto cfg = g.config_path.empty() ? config::default_config() : config::load_config(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  return cfg;
}

fs::path out_dir(const Globals& g, const config::ExperimentConfig& cfg) {
  return g.out.empty() ? fs::path(cfg.output_dir) : fs::path(g.out);
}

// Table cells are text; numbers and booleans regain their JSON type.
json typed_cell(const std::string& cell) {
  if (cell == "true") return true;
  if (cell == "false") return false;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec == std::errc() && end == cell.data() + cell.size() && !cell.empty()) return v;
  return cell;
}

void emit(const Globals& g, const pipeline::Output& o) {
  if (g.format == "json") {
    json rows = json::array();
    for (const auto& r : o.table.rows) {
      json row = json::object();
      for (std::size_t i = 0; i < o.table.columns.size() && i < r.size(); ++i) row[o.table.columns[i]] = typed_cell(r[i]);
      rows.push_back(row);
    }
    std::cout << json{{"summary", o.summary}, {"rows", rows}}.dump(2) << "\n";
    return;
  }
  std::cout << io::format_text_table(o.table);
  if (!o.summary.is_null()) {
    for (const auto& [k, v] : o.summary.items()) std::cout << "# " << k << ": " << v.dump() << "\n";
  }
}

std::string num(double v) { return io::format_number(v); }

int cmd_simulate(const Globals& g) {
  const auto cfg = load(g);
  const auto out = out_dir(g, cfg);
  const auto m = pipeline::simulate(cfg, out, g.jobs);
  pipeline::Output o;
  o.table.columns = {"file"};
  for (const auto& f : m.odmr_files) o.table.rows.push_back({f.generic_string()});
  for (const auto& f : m.relax_files) o.table.rows.push_back({f.generic_string()});
  o.summary = {{"odmr_files", m.odmr_files.size()}, {"relax_files", m.relax_files.size()}, {"out", out.generic_string()}};
  emit(g, o);
  return 0;
}

int cmd_fit_odmr(const Globals& g, const std::vector<std::string>& files, const std::string& probe,
                 const std::string& reference) {
  const auto cfg = load(g);
  std::vector<pipeline::LoadedSpectrum> spectra;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (!probe.empty() || !reference.empty()) {
    if (probe.empty() || reference.empty() || !files.empty()) {
      throw Error(ErrorCode::Pairing, "--probe and --reference must be given together and without other files");
    }
    spectra.push_back({probe, io::read_spectrum(probe)});
    spectra.push_back({reference, io::read_spectrum(reference)});
    spectra[0].spectrum.meta.extra["pair"] = "explicit";
    pairs = {{0, 1}};
  } else {
    for (const auto& f : files) spectra.push_back({f, io::read_spectrum(f)});
    pairs = pipeline::pair_spectra(spectra);
  }
  const auto results = pipeline::fit_odmr_pairs(spectra, pairs, cfg.sensor, g.jobs);
  pipeline::Output o;
  o.table = pipeline::odmr_table(results);
  o.summary = {{"pairs", results.size()}};
  if (!g.out.empty()) {
    io::write_file(fs::path(g.out) / "odmr_fields.csv", io::format_text_table(o.table));
    const auto series = pipeline::tc_series(results, "");
    if (!series.empty()) {
      io::write_file(fs::path(g.out) / "plots" / "b_fgt_vs_temperature.csv", io::tc_series_to_csv(series));
    }
  }
  emit(g, o);
  return 0;
}

int cmd_estimate_tc(const Globals& g, const std::string& file, std::optional<double> fixed_beta) {
  const auto cfg = load(g);
  const auto series = io::read_tc_series(file);
  magnet::TcOptions opts;
  opts.fixed_beta = fixed_beta ? fixed_beta : cfg.analysis.tc_fixed_beta;
  const auto est = magnet::estimate_tc(series, opts);
  pipeline::Output o;
  o.table.columns = {"quantity", "value", "sigma"};
  const auto& se = est.fit.std_errors;
  o.table.rows.push_back({"tc_k", num(est.tc_k), num(se[1])});
  o.table.rows.push_back({"beta_crit", num(est.beta_crit), opts.fixed_beta ? "0" : num(se[2])});
  o.table.rows.push_back({"b0_scale_g", num(est.b0_scale_g), num(se[0])});
  o.table.rows.push_back({"tc_steepest_k", num(est.tc_steepest_k), ""});
  o.summary = {{"tc_k", est.tc_k}, {"extrapolated", est.extrapolated}, {"converged", est.fit.converged}};
  if (!g.out.empty()) {
    double lo = series.front().temperature_k, hi = lo;
    for (const auto& s : series) {
      lo = std::min(lo, s.temperature_k);
      hi = std::max(hi, s.temperature_k);
    }
    io::NumericTable curve;
    curve.columns = {"temperature_k", "b_fgt_g"};
    curve.rows = pipeline::curve_rows(lo, hi, 200, [&](double t) {
      return magnet::critical_curve(t, est.b0_scale_g, est.tc_k, est.beta_crit);
    });
    io::write_file(fs::path(g.out) / "plots" / "tc_fit_curve.csv", io::format_numeric_table(curve));
    io::write_file(fs::path(g.out) / "tc_report.json", o.summary.dump(2) + "\n");
  }
  emit(g, o);
  return 0;
}

int cmd_fit_relax(const Globals& g, const std::vector<std::string>& files) {
  std::vector<std::pair<std::string, relax::RelaxationTrace>> traces;
  for (const auto& f : files) traces.emplace_back(f, io::read_trace(f));
  const auto rates = pipeline::fit_traces(traces, g.jobs);
  pipeline::Output o;
  o.table = pipeline::rate_table(rates);
  o.summary = {{"traces", rates.size()}};
  if (!g.out.empty()) {
    const fs::path out(g.out);
    io::write_file(out / "relax_rates.csv", io::format_text_table(o.table));
    for (auto [pos, name] : {std::pair{Position::Probe, "gamma_p.csv"}, std::pair{Position::Reference, "gamma_r.csv"}}) {
      const bool any = std::any_of(rates.begin(), rates.end(), [pos = pos](const auto& r) { return r.meta.position == pos; });
      if (any) io::write_file(out / name, io::rate_series_to_csv(pipeline::rate_series(rates, pos)));
    }
  }
  emit(g, o);
  return 0;
}

int cmd_fit_phonon(const Globals& g, const std::string& file) {
  const auto series = io::read_rate_series(file);
  const auto fit = relax::fit_phonon_model(series.samples);
  pipeline::Output o;
  o.table.columns = {"parameter", "value", "sigma"};
  o.table.rows = {{"a_khz", num(fit.params.a_khz), num(fit.std_errors.a_khz)},
                  {"b_khz", num(fit.params.b_khz), num(fit.std_errors.b_khz)},
                  {"c_khz_per_k5", num(fit.params.c_khz_per_k5), num(fit.std_errors.c_khz_per_k5)},
                  {"delta_over_k", num(fit.params.delta_over_k), num(fit.std_errors.delta_over_k)},
                  {"delta_mev", num(fit.params.delta_mev()), num(fit.std_errors.delta_mev())}};
  o.summary = {{"converged", fit.fit.converged}, {"residual_norm", fit.fit.residual_norm}};
  if (!g.out.empty()) {
    double lo = series.samples.front().temperature_k, hi = lo;
    for (const auto& s : series.samples) {
      lo = std::min(lo, s.temperature_k);
      hi = std::max(hi, s.temperature_k);
    }
    io::NumericTable curve;
    curve.columns = {"temperature_k", "rate_khz"};
    curve.rows = pipeline::curve_rows(lo, hi, 200, [&](double t) { return relax::phonon_rate(fit.params, t); });
    io::write_file(fs::path(g.out) / "plots" / "phonon_fit_curve.csv", io::format_numeric_table(curve));
  }
  emit(g, o);
  return 0;
}

int cmd_fluctuation(const Globals& g, const std::vector<std::string>& files) {
  const auto cfg = load(g);
  std::optional<io::RateSeries> probe, reference;
  std::vector<std::string> unmatched;
  for (const auto& f : files) {
    auto s = io::read_rate_series(f);
    const auto it = s.meta.find("position");
    const auto pos = it == s.meta.end() ? Position::Unspecified : parse_position(it->second);
    if (pos == Position::Probe && !probe) {
      probe = std::move(s);
    } else if (pos == Position::Reference && !reference) {
      reference = std::move(s);
    } else {
      unmatched.push_back(f);
    }
  }
  if (!probe || !reference || !unmatched.empty()) {
    std::string msg = "fluctuation needs one probe and one reference rate series";
    if (!probe) msg += "; missing probe";
    if (!reference) msg += "; missing reference";
    for (const auto& u : unmatched) msg += "; orphan " + u;
    throw Error(ErrorCode::Pairing, msg);
  }
  const auto res = pipeline::fluctuation(*probe, *reference, cfg.relax.fluctuation);
  pipeline::Output o;
  o.table.columns = {"temperature_k", "gamma_fgt_khz", "sigma_khz", "noise_consistent"};
  for (std::size_t i = 0; i < res.gamma_fgt.size(); ++i) {
    o.table.rows.push_back({num(res.gamma_fgt[i].temperature_k), num(res.gamma_fgt[i].rate_khz),
                            num(res.gamma_fgt[i].sigma_khz), res.diffs[i].noise_consistent ? "true" : "false"});
  }
  o.summary = {{"peak_t_k", res.fit.peak_t_k},
               {"sigma_peak_t_k", res.fit.sigma_peak_t_k},
               {"amplitude_khz", res.fit.model.amplitude_khz},
               {"width_k", res.fit.model.width_k},
               {"converged", res.fit.fit.converged}};
  if (!g.out.empty()) {
    io::RateSeries s;
    s.meta["quantity"] = "gamma_fgt";
    s.samples = res.gamma_fgt;
    io::write_file(fs::path(g.out) / "gamma_fgt.csv", io::rate_series_to_csv(s));
    io::write_file(fs::path(g.out) / "fluctuation_report.json", o.summary.dump(2) + "\n");
  }
  emit(g, o);
  return 0;
}

int cmd_reproduce(const Globals& g) {
  const auto cfg = load(g);
  const auto res = pipeline::reproduce(cfg, out_dir(g, cfg), g.jobs);
  pipeline::Output o;
  o.table.columns = {"check", "value", "truth", "tolerance", "result"};
  for (const auto& c : res.checks) {
    o.table.rows.push_back({c.name, num(c.value), num(c.truth), num(c.tolerance), c.pass ? "PASS" : "FAIL"});
  }
  o.summary = {{"pass", res.all_pass}, {"input_hash", res.report["provenance"]["input_hash"]}};
  emit(g, o);
  return res.all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Divacancy magnetometry and relaxometry toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed (overrides the config)");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--format", g.format, "Stdout format")->check(CLI::IsMember({"csv", "json"}));
  app.add_flag_callback("--version", [] {
    std::cout << "sicmag " << pipeline::kToolVersion << "\n";
    std::exit(0);
  });

  auto* sim = app.add_subcommand("simulate", "Write a synthetic campaign of spectra and traces");

  std::vector<std::string> odmr_files;
  std::string probe, reference;
  auto* fit_odmr = app.add_subcommand("fit-odmr", "Fit spectra and compute B_tot, B_0 and B_FGT per pair");
  fit_odmr->add_option("files", odmr_files, "Spectrum CSV files")->check(CLI::ExistingFile);
  fit_odmr->add_option("--probe", probe, "Probe spectrum")->check(CLI::ExistingFile);
  fit_odmr->add_option("--reference", reference, "Reference spectrum")->check(CLI::ExistingFile);

  std::string tc_file;
  std::optional<double> fixed_beta;
  auto* tc = app.add_subcommand("estimate-tc", "Fit the critical curve to a B_FGT(T) series");
  tc->add_option("file", tc_file, "temperature_k,b_fgt_g,sigma_g CSV")->required()->check(CLI::ExistingFile);
  tc->add_option("--fixed-beta", fixed_beta, "Hold the critical exponent fixed");

  std::vector<std::string> trace_files;
  auto* fit_relax = app.add_subcommand("fit-relax", "Fit stretched exponentials to relaxation traces");
  fit_relax->add_option("files", trace_files, "Trace CSV files")->required()->check(CLI::ExistingFile);

  std::string phonon_file;
  auto* fit_phonon = app.add_subcommand("fit-phonon", "Fit the phonon background to a rate series");
  fit_phonon->add_option("file", phonon_file, "temperature_k,rate_khz,sigma_khz CSV")->required()->check(CLI::ExistingFile);

  std::vector<std::string> rate_files;
  auto* fluct = app.add_subcommand("fluctuation", "Differential rate and fluctuation-peak fit");
  fluct->add_option("files", rate_files, "Probe and reference rate series")->required()->check(CLI::ExistingFile);

  auto* repro = app.add_subcommand("reproduce", "Simulate, analyse and check against the configured truth");

  CLI11_PARSE(app, argc, argv);
  try {
    if (sim->parsed()) return cmd_simulate(g);
    if (fit_odmr->parsed()) return cmd_fit_odmr(g, odmr_files, probe, reference);
    if (tc->parsed()) return cmd_estimate_tc(g, tc_file, fixed_beta);
    if (fit_relax->parsed()) return cmd_fit_relax(g, trace_files);
    if (fit_phonon->parsed()) return cmd_fit_phonon(g, phonon_file);
    if (fluct->parsed()) return cmd_fluctuation(g, rate_files);
    if (repro->parsed()) return cmd_reproduce(g);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
