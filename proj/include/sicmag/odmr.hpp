#pragma once

// Lock-in ODMR spectra: synthesis from the spin model, Lorentzian doublet
// fits, and differential magnetometry between probe and reference spots.

#include "sicmag/metadata.hpp"
#include "sicmag/numfit.hpp"
#include "sicmag/spinmodel.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sicmag::odmr {

struct LorentzianPeak {
  double center_mhz = 0.0;
  double fwhm_mhz = 1.0;
  double amplitude = 0.0;  // signed; dips are negative

  double operator()(double f_mhz) const;
};

struct OdmrSpectrum {
  std::vector<double> frequencies_mhz;
  std::vector<double> signal;
  SampleMeta meta;
  // Set by synthesis when a transition lies more than 3 fwhm outside the grid.
  bool transitions_outside_grid = false;

  // Throws InvalidInput unless lengths match and frequencies strictly increase.
  void validate() const;
};

struct FrequencyGrid {
  double start_mhz = 1000.0;
  double stop_mhz = 1700.0;
  double step_mhz = 1.0;

  std::vector<double> points() const;
};

struct SynthesisOptions {
  FrequencyGrid grid;
  // Placeholder line shape for synthetic studies, not a measured PL6 value.
  double fwhm_mhz = 12.0;
  double contrast = 0.01;
  bool dips = true;
  double noise_sigma = 0.0;
  double baseline = 1.0;
  std::uint64_t seed = 0;
};

OdmrSpectrum synthesize_spectrum(const spin::SensorSpinModel& model, const spin::FieldVector& b,
                                 double temperature_k, const SynthesisOptions& options);

struct SpectrumFit {
  std::vector<LorentzianPeak> peaks;  // sorted by center
  std::vector<double> center_errors_mhz;
  double baseline = 0.0;
  numfit::FitResult fit;
  // Symmetric doublets share fwhm and amplitude and are parametrized by
  // (baseline, center, half_split, fwhm, amplitude).
  bool symmetric_doublet = false;
};

// Boxcar-smoothed (5 samples) prominence search. Returns up to max_peaks
// candidates sorted by center, with rough fwhm and amplitude estimates.
std::vector<LorentzianPeak> detect_peaks(const OdmrSpectrum& spectrum, int max_peaks);

SpectrumFit fit_spectrum(const OdmrSpectrum& spectrum, int n_peaks,
                         std::optional<std::vector<LorentzianPeak>> init = std::nullopt);

// Doublet with tied width and amplitude, used when the branches are not resolved.
SpectrumFit fit_symmetric_doublet(const OdmrSpectrum& spectrum, const LorentzianPeak& merged);

// Residual problems behind the fits, with analytic Jacobians.
numfit::ResidualProblem lorentzian_problem(std::span<const double> freqs,
                                           std::span<const double> signal, int n_peaks);
numfit::ResidualProblem symmetric_doublet_problem(std::span<const double> freqs,
                                                  std::span<const double> signal);

struct FieldEstimate {
  double b_g = 0.0;
  double sigma_b_g = 0.0;
  double d_est_mhz = 0.0;
  double sigma_d_mhz = 0.0;
  // True when the lower resonance was unfolded through zero frequency.
  bool beyond_anticrossing = false;
  bool converged = false;
  SpectrumFit fit;
};

// d_hint_mhz selects between the two readings of the fitted doublet; it falls
// back to zfs_at(model, meta.temperature_k), then to D0.
FieldEstimate extract_field(const OdmrSpectrum& spectrum, const spin::SensorSpinModel& model,
                            std::optional<double> d_hint_mhz = std::nullopt);

struct DifferentialField {
  double b_fgt_g = 0.0;
  double sigma_g = 0.0;
  double signed_difference_g = 0.0;  // probe.B - reference.B
};

DifferentialField differential_field(const FieldEstimate& probe, const FieldEstimate& reference);

}  // namespace sicmag::odmr
