#pragma once

// Spin relaxometry: stretched-exponential trace fits, the phonon background
// Γ_r(T), the differential rate Γ_FGT = Γ_p - Γ_r and a regularized
// power-law peak for the magnetic fluctuation rate.
//
// Delays are in µs and rates in kHz, so the decay argument is t·Γ·1e-3.

#include "sicmag/metadata.hpp"
#include "sicmag/numfit.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace sicmag::relax {

struct RelaxationTrace {
  std::vector<double> delays_us;
  std::vector<double> signal;
  SampleMeta meta;

  // Throws InvalidInput unless delays strictly increase from >= 0 and lengths match.
  void validate() const;
};

struct RelaxationFit {
  double gamma_khz = 0.0;
  double sigma_gamma_khz = 0.0;
  double n_stretch = 1.0;
  double sigma_n = 0.0;
  double amplitude = 0.0;
  numfit::FitResult fit;
};

double stretched_decay(double t_us, double amplitude, double gamma_khz, double n_stretch);

// count log-spaced delays from first_us to last_us inclusive.
std::vector<double> log_delays(double first_us, double last_us, int count);

RelaxationTrace synthesize_trace(double gamma_khz, double n_stretch, double amplitude,
                                 std::span<const double> delays_us, double noise_sigma,
                                 std::uint64_t seed);

// Parameters (amplitude, Γ[, n]); n is dropped when fix_n is given.
numfit::ResidualProblem stretched_problem(std::span<const double> delays_us,
                                          std::span<const double> signal,
                                          std::optional<double> fix_n = std::nullopt);

RelaxationFit fit_trace(const RelaxationTrace& trace, std::optional<double> fix_n = std::nullopt);

struct PhononModelParams {
  double a_khz = 0.0;
  double b_khz = 0.0;
  double c_khz_per_k5 = 0.0;
  double delta_over_k = 400.0;  // Δ expressed in K

  void validate() const;
  double delta_mev() const;
};

struct RateEvaluation {
  double value_khz = 0.0;
  bool range_error = false;  // saturated at the largest finite double
};

RateEvaluation phonon_rate_checked(const PhononModelParams& params, double temperature_k);
double phonon_rate(const PhononModelParams& params, double temperature_k);

// Solves b and c so the model passes through (t1, r1) and (t2, r2) for given a and Δ.
PhononModelParams calibrate_phonon(double a_khz, double delta_over_k, double t1_k, double r1_khz,
                                   double t2_k, double r2_khz);

struct RateSample {
  double temperature_k = 0.0;
  double rate_khz = 0.0;
  double sigma_khz = 0.0;
};

struct PhononFit {
  PhononModelParams params;
  PhononModelParams std_errors;
  numfit::FitResult fit;
};

// Parameters (a, b, c·300⁵, Δ/k) with weighted residuals.
numfit::ResidualProblem phonon_problem(std::span<const RateSample> series);

PhononFit fit_phonon_model(std::span<const RateSample> series);

struct DifferentialRate {
  double gamma_fgt_khz = 0.0;
  double sigma_khz = 0.0;
  bool noise_consistent = false;  // |value| < 2 sigma
};

DifferentialRate differential_rate(double gamma_p_khz, double gamma_r_khz, double sigma_p_khz,
                                   double sigma_r_khz);

struct FluctuationModel {
  double amplitude_khz = 1.0;
  double tc_k = 360.0;
  double exponent_below = 1.0;
  double exponent_above = 1.0;
  double width_k = 10.0;

  void validate() const;
  // Value of the rate at T = Tc.
  double peak_rate_khz() const;
};

// Normalized peak function; equals (width/Tc)^(-exponent_below) at Tc.
double fluctuation_shape(const FluctuationModel& model, double temperature_k);
double fluctuation_rate(const FluctuationModel& model, double temperature_k);

// Amplitude that puts the maximum rate at peak_khz.
FluctuationModel fluctuation_with_peak(FluctuationModel model, double peak_khz);

struct FluctuationFit {
  FluctuationModel model;
  double peak_t_k = 0.0;
  double sigma_peak_t_k = 0.0;
  numfit::FitResult fit;
};

// Parameters (A, Tc, width); the exponents are taken from `shape`.
numfit::ResidualProblem fluctuation_problem(std::span<const RateSample> series,
                                            const FluctuationModel& shape);

FluctuationFit fit_fluctuation_model(std::span<const RateSample> series,
                                     const FluctuationModel& shape = {});

}  // namespace sicmag::relax
