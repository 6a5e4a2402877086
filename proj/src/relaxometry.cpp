#include "sicmag/relaxometry.hpp"

#include "sicmag/error.hpp"
#include "sicmag/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sicmag::relax {

namespace {

constexpr double kUsKhz = 1e-3;     // µs · kHz
constexpr double kCScaleT = 300.0;  // c is fitted as c·300⁵
constexpr double kMevPerKelvin = 8.617333262e-2;

double c_scale() { return std::pow(kCScaleT, 5); }

std::vector<double> sqrt_weights(std::span<const RateSample> series) {
  std::vector<double> sigmas;
  for (const auto& s : series) sigmas.push_back(s.sigma_khz);
  auto w = numfit::inverse_variance_weights(sigmas);
  for (auto& v : w) v = std::sqrt(v);
  return w;
}

void check_series(std::span<const RateSample> series, std::size_t min_points, const char* what) {
  if (series.size() < min_points) {
    throw Error(ErrorCode::InvalidInput, std::string(what) + " needs at least " +
                                             std::to_string(min_points) + " points, got " +
                                             std::to_string(series.size()));
  }
  for (const auto& s : series) {
    if (!(s.temperature_k > 0.0) || !std::isfinite(s.rate_khz) || !(s.sigma_khz >= 0.0)) {
      throw Error(ErrorCode::InvalidInput, std::string(what) + ": invalid series row");
    }
  }
}

double safe_error(const numfit::FitResult& fit, Eigen::Index i) {
  return fit.std_errors.size() > i ? fit.std_errors[i] : std::numeric_limits<double>::infinity();
}

}  // namespace

void RelaxationTrace::validate() const {
  if (delays_us.size() != signal.size()) {
    throw Error(ErrorCode::InvalidInput, "trace delay and signal lengths differ");
  }
  if (delays_us.empty()) throw Error(ErrorCode::InvalidInput, "trace is empty");
  if (!(delays_us.front() >= 0.0)) {
    throw Error(ErrorCode::InvalidInput, "trace delays must start at >= 0");
  }
  for (std::size_t i = 1; i < delays_us.size(); ++i) {
    if (!(delays_us[i] > delays_us[i - 1])) {
      throw Error(ErrorCode::InvalidInput, "trace delays must strictly increase");
    }
  }
  for (double s : signal) {
    if (!std::isfinite(s)) throw Error(ErrorCode::InvalidInput, "trace signal is not finite");
  }
}

double stretched_decay(double t_us, double amplitude, double gamma_khz, double n_stretch) {
  const double u = t_us * gamma_khz * kUsKhz;
  return amplitude * std::exp(-std::pow(u, n_stretch));
}

std::vector<double> log_delays(double first_us, double last_us, int count) {
  if (!(first_us > 0.0) || !(last_us > first_us) || count < 2) {
    throw Error(ErrorCode::InvalidInput, "log delay grid needs 0 < first < last and count >= 2");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  const double lf = std::log(first_us), ll = std::log(last_us);
  for (int i = 0; i < count; ++i) {
    out[static_cast<std::size_t>(i)] = std::exp(lf + (ll - lf) * i / (count - 1));
  }
  out.back() = last_us;
  return out;
}

RelaxationTrace synthesize_trace(double gamma_khz, double n_stretch, double amplitude,
                                 std::span<const double> delays_us, double noise_sigma,
                                 std::uint64_t seed) {
  if (!(gamma_khz > 0.0)) throw Error(ErrorCode::InvalidInput, "Gamma must be positive");
  if (!(n_stretch > 0.0 && n_stretch <= 2.0)) {
    throw Error(ErrorCode::InvalidInput, "stretch exponent must lie in (0, 2]");
  }
  if (!(noise_sigma >= 0.0)) throw Error(ErrorCode::InvalidInput, "noise_sigma must be >= 0");
  RelaxationTrace trace;
  trace.delays_us.assign(delays_us.begin(), delays_us.end());
  trace.signal.resize(trace.delays_us.size());
  const auto noise = gaussian_noise(trace.delays_us.size(), noise_sigma, seed);
  for (std::size_t i = 0; i < trace.delays_us.size(); ++i) {
    trace.signal[i] = stretched_decay(trace.delays_us[i], amplitude, gamma_khz, n_stretch) + noise[i];
  }
  trace.meta.seed = seed;
  trace.validate();
  return trace;
}

numfit::ResidualProblem stretched_problem(std::span<const double> delays_us,
                                          std::span<const double> signal,
                                          std::optional<double> fix_n) {
  std::vector<double> t(delays_us.begin(), delays_us.end());
  std::vector<double> y(signal.begin(), signal.end());
  numfit::ResidualProblem problem;
  problem.param_count = fix_n ? 2 : 3;
  auto n_of = [fix_n](const numfit::Vector& p) { return fix_n ? *fix_n : p[2]; };
  problem.residuals = [t, y, n_of](const numfit::Vector& p) {
    numfit::Vector r(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = stretched_decay(t[i], p[0], p[1], n_of(p)) - y[i];
    }
    return r;
  };
  problem.analytic_jacobian = [t, n_of, fix_n](const numfit::Vector& p) {
    numfit::Matrix jac(static_cast<Eigen::Index>(t.size()), fix_n ? 2 : 3);
    const double amp = p[0], gamma = p[1], n = n_of(p);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double u = t[i] * gamma * kUsKhz;
      const double un = u > 0.0 ? std::pow(u, n) : 0.0;
      const double e = std::exp(-un);
      jac(row, 0) = e;
      jac(row, 1) = -amp * e * n * un / gamma;
      if (!fix_n) jac(row, 2) = u > 0.0 ? -amp * e * un * std::log(u) : 0.0;
    }
    return jac;
  };
  numfit::Vector lower(problem.param_count), upper(problem.param_count);
  lower.head(2) << 0.0, 1e-9;
  upper.head(2) << std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity();
  if (!fix_n) {
    lower[2] = 0.05;
    upper[2] = 2.0;
  }
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;
  return problem;
}

RelaxationFit fit_trace(const RelaxationTrace& trace, std::optional<double> fix_n) {
  trace.validate();
  const auto& t = trace.delays_us;
  const auto& y = trace.signal;
  if (t.size() < 6) {
    throw Error(ErrorCode::InvalidInput,
                "trace fit needs at least 6 samples, got " + std::to_string(t.size()));
  }
  if (fix_n && !(*fix_n > 0.0 && *fix_n <= 2.0)) {
    throw Error(ErrorCode::InvalidInput, "fixed stretch exponent must lie in (0, 2]");
  }
  const double first_positive = t.front() > 0.0 ? t.front() : t[1];
  if (!(t.back() >= 10.0 * first_positive)) {
    throw Error(ErrorCode::InvalidInput, "trace delays must span at least one decade");
  }

  const std::size_t head = std::min<std::size_t>(3, y.size());
  double amp0 = 0.0;
  for (std::size_t i = 0; i < head; ++i) amp0 += y[i] / static_cast<double>(head);
  if (!(amp0 > 0.0)) {
    throw Error(ErrorCode::Initialization, "trace has a non-positive initial plateau");
  }

  // ln(-ln(s/A)) = n ln t + n ln(Γ·1e-3) on the decaying part of the trace.
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  int m = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double ratio = y[i] / amp0;
    if (!(t[i] > 0.0) || !(ratio > 0.05 && ratio < 0.95)) continue;
    const double lx = std::log(t[i]);
    const double ly = std::log(-std::log(ratio));
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++m;
  }
  double n0 = fix_n.value_or(1.0);
  double gamma0 = 0.0;
  if (m >= 2 && sxx * m - sx * sx > 0.0) {
    const double slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / m;
    if (!fix_n) n0 = std::clamp(slope, 0.1, 2.0);
    // Refit the intercept for the (possibly clamped/fixed) slope.
    const double icpt = fix_n || slope != n0 ? (sy - n0 * sx) / m : intercept;
    gamma0 = std::exp(icpt / n0) / kUsKhz;
  } else {
    // Fall back to the 1/e crossing.
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i] > 0.0 && y[i] < amp0 / std::exp(1.0)) {
        gamma0 = 1.0 / (t[i] * kUsKhz);
        break;
      }
    }
  }
  if (!(gamma0 > 0.0) || !std::isfinite(gamma0)) {
    throw Error(ErrorCode::Initialization, "trace shows no decay to initialize the rate");
  }

  const auto problem = stretched_problem(t, y, fix_n);
  numfit::Vector p0(problem.param_count);
  p0[0] = amp0;
  p0[1] = gamma0;
  if (!fix_n) p0[2] = n0;
  p0 = problem.project(p0);

  RelaxationFit out;
  out.fit = numfit::levenberg_marquardt(problem, p0);
  out.amplitude = out.fit.params[0];
  out.gamma_khz = out.fit.params[1];
  out.sigma_gamma_khz = safe_error(out.fit, 1);
  out.n_stretch = fix_n ? *fix_n : out.fit.params[2];
  out.sigma_n = fix_n ? 0.0 : safe_error(out.fit, 2);
  return out;
}

void PhononModelParams::validate() const {
  if (!(a_khz >= 0.0) || !(b_khz >= 0.0) || !(c_khz_per_k5 >= 0.0)) {
    throw Error(ErrorCode::InvalidInput, "phonon parameters a, b, c must be >= 0");
  }
  if (!(delta_over_k > 0.0)) throw Error(ErrorCode::InvalidInput, "phonon Delta/k must be > 0");
}

double PhononModelParams::delta_mev() const { return delta_over_k * kMevPerKelvin; }

RateEvaluation phonon_rate_checked(const PhononModelParams& params, double temperature_k) {
  if (!(temperature_k > 0.0)) throw Error(ErrorCode::InvalidInput, "temperature must be positive");
  const double bose = params.b_khz == 0.0 ? 0.0 : params.b_khz / std::expm1(params.delta_over_k / temperature_k);
  const double t5 = params.c_khz_per_k5 == 0.0 ? 0.0 : params.c_khz_per_k5 * std::pow(temperature_k, 5);
  RateEvaluation out;
  out.value_khz = params.a_khz + bose + t5;
  if (!std::isfinite(out.value_khz)) {
    out.value_khz = std::numeric_limits<double>::max();
    out.range_error = true;
  }
  return out;
}

double phonon_rate(const PhononModelParams& params, double temperature_k) {
  return phonon_rate_checked(params, temperature_k).value_khz;
}

PhononModelParams calibrate_phonon(double a_khz, double delta_over_k, double t1_k, double r1_khz,
                                   double t2_k, double r2_khz) {
  const double e1 = 1.0 / std::expm1(delta_over_k / t1_k);
  const double e2 = 1.0 / std::expm1(delta_over_k / t2_k);
  const double p1 = std::pow(t1_k, 5), p2 = std::pow(t2_k, 5);
  const double det = e1 * p2 - e2 * p1;
  if (det == 0.0 || !std::isfinite(det)) {
    throw Error(ErrorCode::InvalidInput, "phonon calibration anchors are degenerate");
  }
  PhononModelParams out;
  out.a_khz = a_khz;
  out.delta_over_k = delta_over_k;
  out.b_khz = ((r1_khz - a_khz) * p2 - (r2_khz - a_khz) * p1) / det;
  out.c_khz_per_k5 = (e1 * (r2_khz - a_khz) - e2 * (r1_khz - a_khz)) / det;
  out.validate();
  return out;
}

numfit::ResidualProblem phonon_problem(std::span<const RateSample> series) {
  std::vector<double> t, y;
  for (const auto& s : series) {
    t.push_back(s.temperature_k);
    y.push_back(s.rate_khz);
  }
  const auto sw = sqrt_weights(series);
  numfit::ResidualProblem problem;
  problem.param_count = 4;
  problem.residuals = [t, y, sw](const numfit::Vector& p) {
    numfit::Vector r(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double model =
          p[0] + p[1] / std::expm1(p[3] / t[i]) + p[2] * std::pow(t[i] / kCScaleT, 5);
      r[static_cast<Eigen::Index>(i)] = sw[i] * (model - y[i]);
    }
    return r;
  };
  problem.analytic_jacobian = [t, sw](const numfit::Vector& p) {
    numfit::Matrix jac(static_cast<Eigen::Index>(t.size()), 4);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double em1 = std::expm1(p[3] / t[i]);
      jac(row, 0) = sw[i];
      jac(row, 1) = sw[i] / em1;
      jac(row, 2) = sw[i] * std::pow(t[i] / kCScaleT, 5);
      jac(row, 3) = -sw[i] * p[1] * (em1 + 1.0) / (t[i] * em1 * em1);
    }
    return jac;
  };
  numfit::Vector lower(4), upper(4);
  const double inf = std::numeric_limits<double>::infinity();
  lower << 0.0, 0.0, 0.0, 1.0;
  upper << inf, inf, inf, 1e5;
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;
  return problem;
}

PhononFit fit_phonon_model(std::span<const RateSample> series) {
  check_series(series, 5, "phonon fit");
  const auto problem = phonon_problem(series);
  const auto sw = sqrt_weights(series);
  const std::size_t m = series.size();

  std::optional<numfit::FitResult> best;
  for (int k = 0; k < 24; ++k) {
    const double delta0 = 10.0 * std::pow(10.0, 3.0 * k / 23.0);  // 10 K .. 10^4 K
    // Nonnegative weighted linear solve for (a, b, c·300⁵) over all active sets.
    Eigen::MatrixXd basis(static_cast<Eigen::Index>(m), 3);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const double ti = series[i].temperature_k;
      basis(row, 0) = sw[i];
      basis(row, 1) = sw[i] / std::expm1(delta0 / ti);
      basis(row, 2) = sw[i] * std::pow(ti / kCScaleT, 5);
      rhs[row] = sw[i] * series[i].rate_khz;
    }
    Eigen::Vector3d lin = Eigen::Vector3d::Zero();
    double lin_cost = rhs.squaredNorm();
    for (int mask = 1; mask < 8; ++mask) {
      std::vector<int> cols;
      for (int c = 0; c < 3; ++c) {
        if (mask & (1 << c)) cols.push_back(c);
      }
      Eigen::MatrixXd sub(basis.rows(), static_cast<Eigen::Index>(cols.size()));
      for (std::size_t c = 0; c < cols.size(); ++c) {
        sub.col(static_cast<Eigen::Index>(c)) = basis.col(cols[c]);
      }
      const Eigen::VectorXd coef = sub.colPivHouseholderQr().solve(rhs);
      if ((coef.array() < 0.0).any() || !coef.allFinite()) continue;
      const double cost = (sub * coef - rhs).squaredNorm();
      if (cost < lin_cost) {
        lin_cost = cost;
        lin.setZero();
        for (std::size_t c = 0; c < cols.size(); ++c) lin[cols[c]] = coef[static_cast<Eigen::Index>(c)];
      }
    }
    numfit::Vector p0(4);
    p0 << lin[0], lin[1], lin[2], delta0;
    auto fit = numfit::levenberg_marquardt(problem, problem.project(p0));
    if (!best || fit.residual_norm < best->residual_norm) best = std::move(fit);
  }

  PhononFit out;
  out.fit = std::move(*best);
  const auto& p = out.fit.params;
  out.params = {p[0], p[1], p[2] / c_scale(), p[3]};
  out.std_errors = {safe_error(out.fit, 0), safe_error(out.fit, 1), safe_error(out.fit, 2) / c_scale(),
                    safe_error(out.fit, 3)};
  return out;
}

DifferentialRate differential_rate(double gamma_p_khz, double gamma_r_khz, double sigma_p_khz,
                                   double sigma_r_khz) {
  if (!std::isfinite(gamma_p_khz) || !std::isfinite(gamma_r_khz)) {
    throw Error(ErrorCode::InvalidInput, "differential rate needs finite rates");
  }
  DifferentialRate out;
  out.gamma_fgt_khz = gamma_p_khz - gamma_r_khz;
  out.sigma_khz = std::hypot(sigma_p_khz, sigma_r_khz);
  out.noise_consistent = std::abs(out.gamma_fgt_khz) < 2.0 * out.sigma_khz;
  return out;
}

void FluctuationModel::validate() const {
  if (!(amplitude_khz >= 0.0)) throw Error(ErrorCode::InvalidInput, "fluctuation amplitude must be >= 0");
  if (!(tc_k > 0.0)) throw Error(ErrorCode::InvalidInput, "fluctuation Tc must be positive");
  if (!(width_k > 0.0)) throw Error(ErrorCode::InvalidInput, "fluctuation width must be positive");
  if (!(exponent_below > 0.0) || !(exponent_above > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "fluctuation exponents must be positive");
  }
}

double FluctuationModel::peak_rate_khz() const {
  return amplitude_khz * std::pow(width_k / tc_k, -exponent_below);
}

double fluctuation_shape(const FluctuationModel& model, double temperature_k) {
  if (!(temperature_k > 0.0)) throw Error(ErrorCode::InvalidInput, "temperature must be positive");
  const double w = model.width_k / model.tc_k;
  const double x = std::abs(temperature_k - model.tc_k) / model.tc_k;
  if (temperature_k < model.tc_k) return std::pow(x + w, -model.exponent_below);
  return std::pow(w, model.exponent_above - model.exponent_below) *
         std::pow(x + w, -model.exponent_above);
}

double fluctuation_rate(const FluctuationModel& model, double temperature_k) {
  return model.amplitude_khz * fluctuation_shape(model, temperature_k);
}

FluctuationModel fluctuation_with_peak(FluctuationModel model, double peak_khz) {
  model.amplitude_khz = 1.0;
  model.validate();
  model.amplitude_khz = peak_khz / model.peak_rate_khz();
  return model;
}

numfit::ResidualProblem fluctuation_problem(std::span<const RateSample> series,
                                            const FluctuationModel& shape) {
  std::vector<double> t, y;
  for (const auto& s : series) {
    t.push_back(s.temperature_k);
    y.push_back(s.rate_khz);
  }
  const auto sw = sqrt_weights(series);
  const double pb = shape.exponent_below, pa = shape.exponent_above;
  auto model_at = [pb, pa](const numfit::Vector& p) {
    FluctuationModel m;
    m.amplitude_khz = p[0];
    m.tc_k = p[1];
    m.width_k = p[2];
    m.exponent_below = pb;
    m.exponent_above = pa;
    return m;
  };
  numfit::ResidualProblem problem;
  problem.param_count = 3;
  problem.residuals = [t, y, sw, model_at](const numfit::Vector& p) {
    const auto m = model_at(p);
    numfit::Vector r(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = sw[i] * (fluctuation_rate(m, t[i]) - y[i]);
    }
    return r;
  };
  problem.analytic_jacobian = [t, sw, pb, pa](const numfit::Vector& p) {
    const double amp = p[0], tc = p[1], width = p[2];
    const double w = width / tc;
    const double dw_dtc = -width / (tc * tc), dw_dwidth = 1.0 / tc;
    numfit::Matrix jac(static_cast<Eigen::Index>(t.size()), 3);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const bool below = t[i] < tc;
      const double x = std::abs(t[i] - tc) / tc;
      const double dx_dtc = (below ? 1.0 : -1.0) * t[i] / (tc * tc);
      const double s = x + w;
      double f, dlnf_dtc, dlnf_dwidth;
      if (below) {
        f = std::pow(s, -pb);
        dlnf_dtc = -pb * (dx_dtc + dw_dtc) / s;
        dlnf_dwidth = -pb * dw_dwidth / s;
      } else {
        f = std::pow(w, pa - pb) * std::pow(s, -pa);
        dlnf_dtc = (pa - pb) * dw_dtc / w - pa * (dx_dtc + dw_dtc) / s;
        dlnf_dwidth = (pa - pb) * dw_dwidth / w - pa * dw_dwidth / s;
      }
      jac(row, 0) = sw[i] * f;
      jac(row, 1) = sw[i] * amp * f * dlnf_dtc;
      jac(row, 2) = sw[i] * amp * f * dlnf_dwidth;
    }
    return jac;
  };
  const auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
  numfit::Vector lower(3), upper(3);
  lower << 0.0, *tmin, 1e-3 * *tmin;
  upper << std::numeric_limits<double>::infinity(), *tmax, *tmax - *tmin;
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;
  return problem;
}

FluctuationFit fit_fluctuation_model(std::span<const RateSample> series,
                                     const FluctuationModel& shape) {
  check_series(series, 6, "fluctuation fit");
  std::vector<RateSample> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.temperature_k < b.temperature_k; });
  if (!(sorted.back().temperature_k > sorted.front().temperature_k)) {
    throw Error(ErrorCode::InvalidInput, "fluctuation fit needs distinct temperatures");
  }
  const auto peak_it = std::max_element(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.rate_khz < b.rate_khz;
  });
  const auto k = static_cast<std::size_t>(peak_it - sorted.begin());
  if (k == 0 || k + 1 == sorted.size()) {
    throw Error(ErrorCode::NoPeak, "rate series has no bracketed maximum");
  }

  const auto problem = fluctuation_problem(sorted, shape);
  const auto sw = sqrt_weights(sorted);
  const double span = sorted.back().temperature_k - sorted.front().temperature_k;
  std::optional<numfit::FitResult> best;
  for (std::size_t j = k - 1; j <= k + 1; ++j) {
    for (double width_frac : {0.02, 0.05, 0.15}) {
      FluctuationModel trial = shape;
      trial.amplitude_khz = 1.0;
      trial.tc_k = sorted[j].temperature_k;
      trial.width_k = width_frac * span;
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double g = fluctuation_shape(trial, sorted[i].temperature_k);
        const double w = sw[i] * sw[i];
        num += w * g * sorted[i].rate_khz;
        den += w * g * g;
      }
      numfit::Vector p0(3);
      p0 << std::max(num / den, 0.0), trial.tc_k, trial.width_k;
      auto fit = numfit::levenberg_marquardt(problem, problem.project(p0));
      if (!best || fit.residual_norm < best->residual_norm) best = std::move(fit);
    }
  }

  FluctuationFit out;
  out.fit = std::move(*best);
  out.model = shape;
  out.model.amplitude_khz = out.fit.params[0];
  out.model.tc_k = out.fit.params[1];
  out.model.width_k = out.fit.params[2];
  out.peak_t_k = out.model.tc_k;
  out.sigma_peak_t_k = safe_error(out.fit, 1);
  return out;
}

}  // namespace sicmag::relax
