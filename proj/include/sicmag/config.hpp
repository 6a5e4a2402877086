#pragma once

// Experiment configuration loaded from a JSON document. Validation errors
// carry the path of the offending key, e.g. "magnet.geometry.half_extents_um[2]".

#include "sicmag/magnet.hpp"
#include "sicmag/odmr.hpp"
#include "sicmag/relaxometry.hpp"
#include "sicmag/spinmodel.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sicmag::config {

struct Calibration {
  double temperature_k = 295.8;
  double field_g = 200.0;
  magnet::Branch branch = magnet::Branch::Descending;
  double target_g = 3.2;
};

struct MagnetConfig {
  magnet::MagnetizationModel model;
  magnet::FlakeGeometry geometry;
  magnet::SensorPlacement placement;
  std::optional<Calibration> calibration = Calibration{};
};

struct TemperatureSweep {
  std::vector<double> temperatures_k;
  double field_g = 200.0;
  magnet::Branch branch = magnet::Branch::Descending;
};

// Applied fields of the descending half of the loop; the ascending half
// retraces them in reverse order.
struct FieldSweep {
  double temperature_k = 296.0;
  std::vector<double> descending_g;
};

struct OdmrConfig {
  odmr::SynthesisOptions synthesis;
};

struct RelaxConfig {
  std::vector<double> temperatures_k;
  double field_g = 190.0;
  std::vector<double> delays_us;
  double noise_sigma = 0.02;
  double amplitude = 1.0;
  double n_stretch = 1.0;
  relax::PhononModelParams phonon;
  relax::FluctuationModel fluctuation;
};

struct AnalysisConfig {
  std::optional<double> tc_fixed_beta;
};

struct Tolerances {
  double tc_k = 3.0;
  double hc_g = 2.5;
  double fluctuation_peak_k = 5.0;
  double phonon_anchor_rel = 0.05;
  double b_fgt_calibration_g = 0.3;
};

struct ExperimentConfig {
  spin::SensorSpinModel sensor;
  MagnetConfig magnet;
  TemperatureSweep temperature_sweep;
  FieldSweep field_sweep;
  OdmrConfig odmr;
  RelaxConfig relax;
  AnalysisConfig analysis;
  Tolerances tolerances;
  std::string output_dir = "out";
  std::uint64_t seed = 20240601;

  // Magnet model with the optional M_sat calibration applied.
  magnet::MagnetizationModel calibrated_magnet() const;
  // Throws Config errors; checks the composed sub-configs.
  void validate() const;
};

ExperimentConfig default_config();
ExperimentConfig parse_config(const std::string& json_text, const std::string& source = "config");
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical JSON dump, used for hashing and report provenance.
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace sicmag::config
