#include "sicmag/odmr.hpp"

#include "sicmag/error.hpp"
#include "sicmag/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace sicmag::odmr {

namespace {

constexpr int kSmoothWidth = 5;
constexpr double kWeakLineRatio = 0.3;

struct LineTerms {
  double shape;  // 1/(1+u²)
  double d_center;
  double d_fwhm;
};

// Value is amplitude*shape; derivatives are with respect to center and fwhm.
LineTerms line_terms(double f, double center, double fwhm, double amplitude) {
  const double u = 2.0 * (f - center) / fwhm;
  const double q = 1.0 / (1.0 + u * u);
  return {q, 4.0 * amplitude * u * q * q / fwhm, 2.0 * amplitude * u * u * q * q / fwhm};
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), mid));
  }
  return m;
}

std::vector<double> boxcar(std::span<const double> x, int width) {
  const int half = width / 2;
  const auto n = static_cast<int>(x.size());
  std::vector<double> out(x.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - half);
    const int hi = std::min(n - 1, i + half);
    double acc = 0.0;
    for (int k = lo; k <= hi; ++k) acc += x[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(i)] = acc / (hi - lo + 1);
  }
  return out;
}

double min_spacing(std::span<const double> f) {
  double s = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < f.size(); ++i) s = std::min(s, f[i] - f[i - 1]);
  return s;
}

void check_fit_inputs(std::span<const double> freqs, std::span<const double> signal,
                      std::size_t needed) {
  if (freqs.size() != signal.size()) {
    throw Error(ErrorCode::InvalidInput, "frequency and signal lengths differ");
  }
  if (freqs.size() < needed) {
    throw Error(ErrorCode::InvalidInput,
                "spectrum has " + std::to_string(freqs.size()) + " samples; at least " +
                    std::to_string(needed) + " are required");
  }
}

numfit::Vector to_vector(std::span<const double> x) {
  return Eigen::Map<const numfit::Vector>(x.data(), static_cast<Eigen::Index>(x.size()));
}

double safe_var(const std::optional<numfit::Matrix>& cov, Eigen::Index i, Eigen::Index j) {
  if (!cov) return std::numeric_limits<double>::infinity();
  return (*cov)(i, j);
}

}  // namespace

double LorentzianPeak::operator()(double f_mhz) const {
  const double u = 2.0 * (f_mhz - center_mhz) / fwhm_mhz;
  return amplitude / (1.0 + u * u);
}

void OdmrSpectrum::validate() const {
  if (frequencies_mhz.size() != signal.size()) {
    throw Error(ErrorCode::InvalidInput, "spectrum frequency and signal lengths differ");
  }
  for (std::size_t i = 1; i < frequencies_mhz.size(); ++i) {
    if (!(frequencies_mhz[i] > frequencies_mhz[i - 1])) {
      throw Error(ErrorCode::InvalidInput,
                  "spectrum frequencies must be strictly increasing (row " + std::to_string(i) +
                      ")");
    }
  }
}

std::vector<double> FrequencyGrid::points() const {
  if (!(step_mhz > 0.0) || !(stop_mhz >= start_mhz)) {
    throw Error(ErrorCode::InvalidInput, "frequency grid needs step > 0 and stop >= start");
  }
  const auto n = static_cast<std::size_t>(std::floor((stop_mhz - start_mhz) / step_mhz + 1e-9)) + 1;
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = start_mhz + step_mhz * static_cast<double>(i);
  return f;
}

OdmrSpectrum synthesize_spectrum(const spin::SensorSpinModel& model, const spin::FieldVector& b,
                                 double temperature_k, const SynthesisOptions& options) {
  if (!(options.fwhm_mhz > 0.0)) throw Error(ErrorCode::InvalidInput, "fwhm must be positive");
  if (!(options.noise_sigma >= 0.0)) {
    throw Error(ErrorCode::InvalidInput, "noise sigma must be non-negative");
  }
  OdmrSpectrum spectrum;
  spectrum.frequencies_mhz = options.grid.points();
  const auto transitions = spin::transition_frequencies(model, b, temperature_k);
  const double amp = options.dips ? -options.contrast : options.contrast;
  const LorentzianPeak lines[2] = {
      {std::abs(transitions.f_minus_mhz), options.fwhm_mhz, amp},
      {std::abs(transitions.f_plus_mhz), options.fwhm_mhz, amp},
  };
  const double margin = 3.0 * options.fwhm_mhz;
  for (const auto& line : lines) {
    if (line.center_mhz < options.grid.start_mhz - margin ||
        line.center_mhz > options.grid.stop_mhz + margin) {
      spectrum.transitions_outside_grid = true;
    }
  }
  const auto noise =
      gaussian_noise(spectrum.frequencies_mhz.size(), options.noise_sigma, options.seed);
  spectrum.signal.resize(spectrum.frequencies_mhz.size());
  for (std::size_t i = 0; i < spectrum.signal.size(); ++i) {
    const double f = spectrum.frequencies_mhz[i];
    spectrum.signal[i] = options.baseline + lines[0](f) + lines[1](f) + noise[i];
  }
  spectrum.meta.temperature_k = temperature_k;
  spectrum.meta.field_g = b.bz;
  spectrum.meta.seed = options.seed;
  return spectrum;
}

std::vector<LorentzianPeak> detect_peaks(const OdmrSpectrum& spectrum, int max_peaks) {
  spectrum.validate();
  const auto& f = spectrum.frequencies_mhz;
  const std::size_t n = f.size();
  if (n < 3 || max_peaks <= 0) return {};

  const auto smooth = boxcar(spectrum.signal, kSmoothWidth);
  const double base = median(smooth);
  const double lo = *std::min_element(smooth.begin(), smooth.end());
  const double hi = *std::max_element(smooth.begin(), smooth.end());
  const double sign = (base - lo) >= (hi - base) ? -1.0 : 1.0;

  std::vector<double> dev(n);
  for (std::size_t i = 0; i < n; ++i) dev[i] = sign * (smooth[i] - base);
  const double max_dev = *std::max_element(dev.begin(), dev.end());
  if (!(max_dev > 0.0)) return {};

  // Robust white-noise level from first differences of the raw signal.
  std::vector<double> diffs(n - 1);
  for (std::size_t i = 1; i < n; ++i) diffs[i - 1] = spectrum.signal[i] - spectrum.signal[i - 1];
  const double dmed = median(diffs);
  for (auto& d : diffs) d = std::abs(d - dmed);
  const double sigma = 1.4826 * median(diffs) / std::sqrt(2.0);
  const double threshold =
      std::max(5.0 * sigma / std::sqrt(static_cast<double>(kSmoothWidth)), 1e-6 * max_dev);

  struct Candidate {
    std::size_t index;
    double prominence;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const bool left_ok = i == 0 || dev[i] > dev[i - 1];
    const bool right_ok = i + 1 == n || dev[i] >= dev[i + 1];
    if (!left_ok || !right_ok || dev[i] <= 0.0) continue;
    double left_min = dev[i];
    std::size_t k = i;
    while (k > 0 && dev[k - 1] <= dev[i]) left_min = std::min(left_min, dev[--k]);
    double right_min = dev[i];
    k = i;
    while (k + 1 < n && dev[k + 1] <= dev[i]) right_min = std::min(right_min, dev[++k]);
    // A peak touching the array edge is measured only against the side that has a floor.
    double floor = std::max(left_min, right_min);
    if (i == 0) floor = right_min;
    if (i + 1 == n) floor = left_min;
    const double prominence = dev[i] - std::max(floor, 0.0);
    if (prominence > threshold) candidates.push_back({i, prominence});
  }
  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.prominence > b.prominence || (a.prominence == b.prominence && a.index < b.index);
  });
  if (candidates.size() > static_cast<std::size_t>(max_peaks)) {
    candidates.resize(static_cast<std::size_t>(max_peaks));
  }

  const double step = min_spacing(f);
  std::vector<LorentzianPeak> peaks;
  for (const auto& c : candidates) {
    const double half = 0.5 * dev[c.index];
    std::size_t l = c.index;
    while (l > 0 && dev[l] > half) --l;
    std::size_t r = c.index;
    while (r + 1 < n && dev[r] > half) ++r;
    const double width = std::max(f[r] - f[l], 2.0 * step);
    peaks.push_back({f[c.index], width, sign * (spectrum.signal[c.index] - base)});
  }
  std::sort(peaks.begin(), peaks.end(),
            [](const auto& a, const auto& b) { return a.center_mhz < b.center_mhz; });
  for (auto& p : peaks) p.amplitude = sign * std::abs(p.amplitude);
  return peaks;
}

numfit::ResidualProblem lorentzian_problem(std::span<const double> freqs,
                                           std::span<const double> signal, int n_peaks) {
  check_fit_inputs(freqs, signal, 1);
  const numfit::Vector f = to_vector(freqs);
  const numfit::Vector y = to_vector(signal);
  const Eigen::Index np = 1 + 3 * n_peaks;
  const double span = freqs.back() - freqs.front();
  const double step = min_spacing(freqs);

  numfit::ResidualProblem problem;
  problem.param_count = np;
  problem.residuals = [f, y, n_peaks](const numfit::Vector& p) {
    numfit::Vector model = numfit::Vector::Constant(f.size(), p[0]);
    for (int k = 0; k < n_peaks; ++k) {
      const double c = p[1 + 3 * k], w = p[2 + 3 * k], a = p[3 + 3 * k];
      model += (a / (1.0 + (2.0 * (f.array() - c) / w).square())).matrix();
    }
    return numfit::Vector(model - y);
  };
  problem.analytic_jacobian = [f, n_peaks, np](const numfit::Vector& p) {
    numfit::Matrix jac(f.size(), np);
    jac.col(0).setOnes();
    for (int k = 0; k < n_peaks; ++k) {
      const double c = p[1 + 3 * k], w = p[2 + 3 * k], a = p[3 + 3 * k];
      for (Eigen::Index i = 0; i < f.size(); ++i) {
        const auto t = line_terms(f[i], c, w, a);
        jac(i, 1 + 3 * k) = t.d_center;
        jac(i, 2 + 3 * k) = t.d_fwhm;
        jac(i, 3 + 3 * k) = t.shape;
      }
    }
    return jac;
  };
  numfit::Vector lower = numfit::Vector::Constant(np, -std::numeric_limits<double>::infinity());
  numfit::Vector upper = numfit::Vector::Constant(np, std::numeric_limits<double>::infinity());
  for (int k = 0; k < n_peaks; ++k) {
    lower[1 + 3 * k] = freqs.front();
    upper[1 + 3 * k] = freqs.back();
    lower[2 + 3 * k] = step;
    upper[2 + 3 * k] = std::max(span, 2.0 * step);
  }
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;
  return problem;
}

numfit::ResidualProblem symmetric_doublet_problem(std::span<const double> freqs,
                                                  std::span<const double> signal) {
  check_fit_inputs(freqs, signal, 1);
  const numfit::Vector f = to_vector(freqs);
  const numfit::Vector y = to_vector(signal);
  const double span = freqs.back() - freqs.front();
  const double step = min_spacing(freqs);

  numfit::ResidualProblem problem;
  problem.param_count = 5;
  problem.residuals = [f, y](const numfit::Vector& p) {
    const double c = p[1], s = p[2], w = p[3], a = p[4];
    const auto lo = (a / (1.0 + (2.0 * (f.array() - (c - s)) / w).square()));
    const auto hi = (a / (1.0 + (2.0 * (f.array() - (c + s)) / w).square()));
    return numfit::Vector((p[0] + lo + hi).matrix() - y);
  };
  problem.analytic_jacobian = [f](const numfit::Vector& p) {
    const double c = p[1], s = p[2], w = p[3], a = p[4];
    numfit::Matrix jac(f.size(), 5);
    for (Eigen::Index i = 0; i < f.size(); ++i) {
      const auto lo = line_terms(f[i], c - s, w, a);
      const auto hi = line_terms(f[i], c + s, w, a);
      jac(i, 0) = 1.0;
      jac(i, 1) = lo.d_center + hi.d_center;
      jac(i, 2) = hi.d_center - lo.d_center;
      jac(i, 3) = lo.d_fwhm + hi.d_fwhm;
      jac(i, 4) = lo.shape + hi.shape;
    }
    return jac;
  };
  const double inf = std::numeric_limits<double>::infinity();
  numfit::Vector lower(5), upper(5);
  lower << -inf, freqs.front(), 0.0, step, -inf;
  upper << inf, freqs.back(), 0.5 * span, std::max(span, 2.0 * step), inf;
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;
  return problem;
}

SpectrumFit fit_spectrum(const OdmrSpectrum& spectrum, int n_peaks,
                         std::optional<std::vector<LorentzianPeak>> init) {
  spectrum.validate();
  if (n_peaks != 1 && n_peaks != 2) {
    throw Error(ErrorCode::InvalidInput, "n_peaks must be 1 or 2");
  }
  check_fit_inputs(spectrum.frequencies_mhz, spectrum.signal,
                   static_cast<std::size_t>(8 * n_peaks));

  std::vector<LorentzianPeak> guesses;
  if (init) {
    guesses = *init;
    if (guesses.size() != static_cast<std::size_t>(n_peaks)) {
      throw Error(ErrorCode::InvalidInput, "init must provide exactly n_peaks guesses");
    }
  } else {
    guesses = detect_peaks(spectrum, n_peaks);
    if (guesses.size() < static_cast<std::size_t>(n_peaks)) {
      throw Error(ErrorCode::Initialization,
                  "peak detection found " + std::to_string(guesses.size()) +
                      " candidate(s); " + std::to_string(n_peaks) + " required");
    }
  }

  auto problem = lorentzian_problem(spectrum.frequencies_mhz, spectrum.signal, n_peaks);
  numfit::Vector p0(problem.param_count);
  p0[0] = median(spectrum.signal);
  for (int k = 0; k < n_peaks; ++k) {
    const auto& g = guesses[static_cast<std::size_t>(k)];
    p0[1 + 3 * k] = g.center_mhz;
    p0[2 + 3 * k] = g.fwhm_mhz;
    p0[3 + 3 * k] = g.amplitude;
  }
  p0 = problem.project(p0);

  SpectrumFit out;
  out.fit = numfit::levenberg_marquardt(problem, p0);
  out.baseline = out.fit.params[0];
  std::vector<std::pair<LorentzianPeak, double>> found;
  for (int k = 0; k < n_peaks; ++k) {
    found.push_back({{out.fit.params[1 + 3 * k], out.fit.params[2 + 3 * k],
                      out.fit.params[3 + 3 * k]},
                     out.fit.std_errors[1 + 3 * k]});
  }
  std::sort(found.begin(), found.end(),
            [](const auto& a, const auto& b) { return a.first.center_mhz < b.first.center_mhz; });
  for (const auto& [peak, err] : found) {
    out.peaks.push_back(peak);
    out.center_errors_mhz.push_back(err);
  }
  return out;
}

SpectrumFit fit_symmetric_doublet(const OdmrSpectrum& spectrum, const LorentzianPeak& merged) {
  spectrum.validate();
  check_fit_inputs(spectrum.frequencies_mhz, spectrum.signal, 16);
  auto problem = symmetric_doublet_problem(spectrum.frequencies_mhz, spectrum.signal);
  numfit::Vector p0(5);
  p0 << median(spectrum.signal), merged.center_mhz, 0.25 * merged.fwhm_mhz,
      0.8 * merged.fwhm_mhz, 0.5 * merged.amplitude;
  p0 = problem.project(p0);

  SpectrumFit out;
  out.symmetric_doublet = true;
  out.fit = numfit::levenberg_marquardt(problem, p0);
  const auto& p = out.fit.params;
  out.baseline = p[0];
  out.peaks = {{p[1] - p[2], p[3], p[4]}, {p[1] + p[2], p[3], p[4]}};
  double err = std::numeric_limits<double>::infinity();
  if (out.fit.covariance) {
    const auto& cov = *out.fit.covariance;
    err = std::sqrt(std::max(0.0, cov(1, 1) + cov(2, 2) + 2.0 * cov(1, 2)));
  }
  out.center_errors_mhz = {err, err};
  return out;
}

FieldEstimate extract_field(const OdmrSpectrum& spectrum, const spin::SensorSpinModel& model,
                            std::optional<double> d_hint_mhz) {
  model.validate();
  auto candidates = detect_peaks(spectrum, 2);
  if (candidates.empty()) {
    throw Error(ErrorCode::Initialization, "no ODMR resonance found in the spectrum");
  }
  // Both branches share the contrast; a much weaker second extremum is noise.
  if (candidates.size() == 2) {
    const double a0 = std::abs(candidates[0].amplitude), a1 = std::abs(candidates[1].amplitude);
    if (std::min(a0, a1) < kWeakLineRatio * std::max(a0, a1)) {
      candidates = {a0 >= a1 ? candidates[0] : candidates[1]};
    }
  }

  double hint = model.d0_mhz;
  if (d_hint_mhz) {
    hint = *d_hint_mhz;
  } else if (spectrum.meta.has_temperature()) {
    hint = spin::zfs_at(model, spectrum.meta.temperature_k);
  }

  FieldEstimate est;
  const double gamma = model.gamma_mhz_per_g;
  // Linear combinations of the two centers: normal = (hi - lo, hi + lo),
  // unfolded = (hi + lo, hi - lo) for (2*gamma*B, 2*D).
  double lo = 0.0, hi = 0.0, var_lo = 0.0, var_hi = 0.0, cov_lh = 0.0;
  if (candidates.size() >= 2) {
    est.fit = fit_spectrum(spectrum, 2, candidates);
    lo = est.fit.peaks[0].center_mhz;
    hi = est.fit.peaks[1].center_mhz;
    const auto& cov = est.fit.fit.covariance;
    // Peaks were sorted; recover which parameter slot each came from.
    const bool swapped = est.fit.fit.params[1] > est.fit.fit.params[4];
    const Eigen::Index ilo = swapped ? 4 : 1;
    const Eigen::Index ihi = swapped ? 1 : 4;
    var_lo = safe_var(cov, ilo, ilo);
    var_hi = safe_var(cov, ihi, ihi);
    cov_lh = cov ? (*cov)(ilo, ihi) : 0.0;
  } else {
    est.fit = fit_symmetric_doublet(spectrum, candidates.front());
    const auto& p = est.fit.fit.params;
    lo = p[1] - p[2];
    hi = p[1] + p[2];
    const auto& cov = est.fit.fit.covariance;
    const double vc = safe_var(cov, 1, 1), vs = safe_var(cov, 2, 2);
    const double cs = cov ? (*cov)(1, 2) : 0.0;
    var_lo = vc + vs - 2.0 * cs;
    var_hi = vc + vs + 2.0 * cs;
    cov_lh = vc - vs;
  }

  const double d_normal = 0.5 * (hi + lo);
  const double d_unfolded = 0.5 * (hi - lo);
  est.beyond_anticrossing = std::abs(d_unfolded - hint) < std::abs(d_normal - hint);
  const double f_minus = est.beyond_anticrossing ? -lo : lo;
  const auto split = spin::field_from_splitting(model, f_minus, hi);
  est.b_g = split.b_g;
  est.d_est_mhz = split.center_mhz;

  const double sgn = est.beyond_anticrossing ? 1.0 : -1.0;
  const double var_split = var_hi + var_lo + 2.0 * sgn * cov_lh;
  const double var_center = var_hi + var_lo - 2.0 * sgn * cov_lh;
  est.sigma_b_g = std::sqrt(std::max(0.0, var_split)) / (2.0 * gamma);
  est.sigma_d_mhz = 0.5 * std::sqrt(std::max(0.0, var_center));
  if (!std::isfinite(var_split)) est.sigma_b_g = std::numeric_limits<double>::infinity();
  if (!std::isfinite(var_center)) est.sigma_d_mhz = std::numeric_limits<double>::infinity();
  est.converged = est.fit.fit.converged;
  return est;
}

DifferentialField differential_field(const FieldEstimate& probe, const FieldEstimate& reference) {
  const double diff = probe.b_g - reference.b_g;
  return {std::abs(diff), std::hypot(probe.sigma_b_g, reference.sigma_b_g), diff};
}

}  // namespace sicmag::odmr
