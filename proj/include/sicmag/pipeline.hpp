#pragma once

// Campaign orchestration behind the CLI verbs: synthetic data generation,
// batch fits, pairing of probe and reference files, and the end-to-end
// reproduce run with its pass/fail checks.

#include "sicmag/config.hpp"
#include "sicmag/csv_io.hpp"
#include "sicmag/magnet.hpp"
#include "sicmag/odmr.hpp"
#include "sicmag/relaxometry.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace sicmag::pipeline {

inline constexpr const char* kToolVersion = "0.1.0";

// Runs fn(0..n-1) on up to `jobs` threads. The exception of the lowest
// failing index is rethrown after all workers stop.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

struct Output {
  io::TextTable table;
  nlohmann::json summary;
};

struct SimulationManifest {
  std::vector<std::filesystem::path> odmr_files;
  std::vector<std::filesystem::path> relax_files;
};

// Writes out/odmr/*.csv, out/relax/*.csv and out/config.json.
SimulationManifest simulate(const config::ExperimentConfig& cfg, const std::filesystem::path& out,
                            int jobs);

struct LoadedSpectrum {
  std::string name;
  odmr::OdmrSpectrum spectrum;
};

struct OdmrPairResult {
  std::string pair;
  std::string probe_name;
  std::string reference_name;
  SampleMeta meta;  // of the probe spectrum
  odmr::FieldEstimate probe;
  odmr::FieldEstimate reference;
  odmr::DifferentialField diff;
};

// Groups by the `pair` metadata key, one probe and one reference per group.
// Without any pair keys, exactly one probe and one reference are paired.
std::vector<std::pair<std::size_t, std::size_t>> pair_spectra(
    const std::vector<LoadedSpectrum>& spectra);

std::vector<OdmrPairResult> fit_odmr_pairs(const std::vector<LoadedSpectrum>& spectra,
                                           const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                           const spin::SensorSpinModel& sensor, int jobs);

io::TextTable odmr_table(const std::vector<OdmrPairResult>& results);

// B_FGT(T) from pairs whose `sweep` key equals `sweep` (all pairs when empty)
// and which carry a temperature.
std::vector<magnet::TcSample> tc_series(const std::vector<OdmrPairResult>& results,
                                        const std::string& sweep);

struct LoopPoint {
  double applied_field_g = 0.0;
  magnet::Branch branch = magnet::Branch::Descending;
  double signed_bz_g = 0.0;  // stray field inferred as signed_difference * sign(H)
};

// Field-sweep points in file order.
std::vector<LoopPoint> loop_points(const std::vector<OdmrPairResult>& results,
                                   const std::string& sweep);

// Mean |switching field| from the sign changes of the inferred stray field on
// each branch; nullopt when no switch is observed.
std::optional<double> estimate_coercive_field(const std::vector<LoopPoint>& points);

struct TraceRate {
  std::string name;
  SampleMeta meta;
  relax::RelaxationFit fit;
};

std::vector<TraceRate> fit_traces(const std::vector<std::pair<std::string, relax::RelaxationTrace>>& traces,
                                  int jobs);

io::TextTable rate_table(const std::vector<TraceRate>& rates);

// Rate series of one position, sorted by temperature. Throws Pairing when empty.
io::RateSeries rate_series(const std::vector<TraceRate>& rates, Position position);

struct FluctuationResult {
  std::vector<relax::RateSample> gamma_fgt;
  std::vector<relax::DifferentialRate> diffs;
  relax::FluctuationFit fit;
};

// Pairs rows by temperature; unmatched rows raise a Pairing error.
FluctuationResult fluctuation(const io::RateSeries& probe, const io::RateSeries& reference,
                              const relax::FluctuationModel& shape = {});

std::vector<std::vector<double>> curve_rows(double t_lo, double t_hi, int count,
                                            const std::function<double(double)>& f);

struct Check {
  std::string name;
  double value = 0.0;
  double truth = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct ReproduceResult {
  std::vector<Check> checks;
  nlohmann::json report;
  bool all_pass = false;
};

// Simulates into `out`, runs every analysis stage, writes out/report.json and
// out/plots/*, and compares recovered quantities against the configured truth.
ReproduceResult reproduce(const config::ExperimentConfig& cfg, const std::filesystem::path& out,
                          int jobs);

// FNV-1a over the canonical config dump followed by the bytes of every file.
std::string provenance_hash(const std::string& config_dump,
                            const std::vector<std::filesystem::path>& files);

std::string hex64(std::uint64_t v);

}  // namespace sicmag::pipeline
