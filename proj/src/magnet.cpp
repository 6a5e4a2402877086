#include "sicmag/magnet.hpp"

#include "sicmag/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace sicmag::magnet {

namespace {

// 1 Oe of applied field expressed in A/m.
constexpr double kAmPerOersted = 1000.0 / (4.0 * std::numbers::pi);
// B[G] = 1e-3 * sigma[A/m] * S, where S is the face integral with the 1/4pi
// absorbed (mu0 * 1e4 / 4pi). This is the only unit conversion in the file.
constexpr double kGaussPerAmpPerMeterOver4Pi = 1e-3;

// ln((yb + Rb) / (ya + Ra)) for R = sqrt(x² + y² + z²), evaluated without
// cancellation when y is negative.
double log_ratio(double x, double ya, double yb, double z) {
  const double rho2 = x * x + z * z;
  const double ra = std::sqrt(rho2 + ya * ya);
  const double rb = std::sqrt(rho2 + yb * yb);
  if (ya >= 0.0) return std::log((yb + rb) / (ya + ra));
  if (yb < 0.0) return std::log((ra - ya) / (rb - yb));
  return std::log((yb + rb) * (ra - ya) / rho2);
}

double corner_angle(double x, double y, double z) {
  const double r = std::sqrt(x * x + y * y + z * z);
  return std::atan(x * y / (z * r));
}

// Field (up to the 1/4pi-normalized prefactor) of a uniformly charged
// rectangle with unit surface charge. xa<xb and ya<yb are the in-plane
// offsets of the evaluation point from the far and near rectangle edges, z
// the offset from the plane. Returns (in-plane i, in-plane j, normal).
Vec3 rectangle_field(double xa, double xb, double ya, double yb, double z) {
  Vec3 h;
  h.x = -log_ratio(xb, ya, yb, z) + log_ratio(xa, ya, yb, z);
  h.y = -log_ratio(yb, xa, xb, z) + log_ratio(ya, xa, xb, z);
  if (z != 0.0) {
    h.z = corner_angle(xb, yb, z) - corner_angle(xa, yb, z) - corner_angle(xb, ya, z) +
          corner_angle(xa, ya, z);
  }
  return h;
}

Vec3 normalized(const Vec3& v) {
  const double n = v.norm();
  return {v.x / n, v.y / n, v.z / n};
}

}  // namespace

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

void MagnetizationModel::validate() const {
  if (!(m_sat_a_per_m >= 0.0) || !std::isfinite(m_sat_a_per_m)) {
    throw Error(ErrorCode::InvalidInput, "magnet model: M_sat must be finite and non-negative");
  }
  if (!(tc_k > 0.0)) throw Error(ErrorCode::InvalidInput, "magnet model: Tc must be positive");
  if (!(beta_crit > 0.0 && beta_crit < 1.0)) {
    throw Error(ErrorCode::InvalidInput, "magnet model: beta must lie in (0, 1)");
  }
  if (!(hc_g >= 0.0)) throw Error(ErrorCode::InvalidInput, "magnet model: Hc must be >= 0");
  if (!std::isfinite(chi_para) || !std::isfinite(chi_high)) {
    throw Error(ErrorCode::InvalidInput, "magnet model: susceptibilities must be finite");
  }
}

std::string_view to_string(Branch b) noexcept {
  return b == Branch::Ascending ? "ascending" : "descending";
}

Branch parse_branch(std::string_view text) {
  if (text == "ascending" || text == "up") return Branch::Ascending;
  if (text == "descending" || text == "down") return Branch::Descending;
  throw Error(ErrorCode::InvalidInput, "unknown hysteresis branch '" + std::string(text) + "'");
}

double magnetization(const MagnetizationModel& model, double temperature_k, double h_applied_g,
                     Branch branch) {
  model.validate();
  if (!(temperature_k > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "temperature must be positive");
  }
  const double h_am = h_applied_g * kAmPerOersted;
  if (temperature_k >= model.tc_k) return model.chi_para * h_am;

  const double magnitude =
      model.m_sat_a_per_m * std::pow(1.0 - temperature_k / model.tc_k, model.beta_crit);
  // Ascending sweeps switch to +M at +Hc, descending sweeps to -M at -Hc.
  const double sign = branch == Branch::Ascending ? (h_applied_g >= model.hc_g ? 1.0 : -1.0)
                                                  : (h_applied_g <= -model.hc_g ? -1.0 : 1.0);
  return sign * magnitude + model.chi_high * h_am;
}

double magnetization(const MagnetizationModel& model, double temperature_k, double h_applied_g,
                     std::string_view branch) {
  return magnetization(model, temperature_k, h_applied_g, parse_branch(branch));
}

void FlakeGeometry::validate() const {
  for (int k = 0; k < 3; ++k) {
    if (!(half_extents_um[k] > 0.0) || !std::isfinite(half_extents_um[k])) {
      throw Error(ErrorCode::InvalidInput, "flake geometry: half-extents must be positive");
    }
    if (!std::isfinite(center_um[k])) {
      throw Error(ErrorCode::InvalidInput, "flake geometry: center must be finite");
    }
  }
  const double n = direction.norm();
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(ErrorCode::InvalidInput, "flake geometry: magnetization direction must be nonzero");
  }
}

double FlakeGeometry::volume_um3() const {
  return 8.0 * half_extents_um.x * half_extents_um.y * half_extents_um.z;
}

double FlakeGeometry::max_dimension_um() const {
  return 2.0 * std::max({half_extents_um.x, half_extents_um.y, half_extents_um.z});
}

bool FlakeGeometry::contains(const Vec3& p) const {
  for (int k = 0; k < 3; ++k) {
    if (!(std::abs(p[k] - center_um[k]) < half_extents_um[k])) return false;
  }
  return true;
}

void SensorPlacement::validate() const {
  if (!(depth_nm > 0.0)) throw Error(ErrorCode::InvalidInput, "sensor depth must be positive");
  if (!std::isfinite(offset_x_um) || !std::isfinite(offset_y_um)) {
    throw Error(ErrorCode::InvalidInput, "sensor offset must be finite");
  }
}

Vec3 sensor_point(const FlakeGeometry& geometry, const SensorPlacement& placement) {
  const double surface = geometry.center_um.z - geometry.half_extents_um.z;
  return {geometry.center_um.x + placement.offset_x_um, geometry.center_um.y + placement.offset_y_um,
          surface - placement.depth_nm * 1e-3};
}

StrayField stray_field(const FlakeGeometry& geometry, double m_a_per_m, const Vec3& point_um) {
  geometry.validate();
  const Vec3& c = geometry.center_um;
  const Vec3& h = geometry.half_extents_um;
  const double tol = 1e-12 * geometry.max_dimension_um();

  StrayField out;
  Vec3 p = point_um;
  bool inside_all = true, closure_all = true;
  for (int k = 0; k < 3; ++k) {
    const double d = std::abs(p[k] - c[k]);
    if (!(d < h[k] - tol)) inside_all = false;
    if (!(d <= h[k] + tol)) closure_all = false;
  }
  if (inside_all) {
    throw Error(ErrorCode::Domain, "stray field requested inside the magnetized prism");
  }
  if (closure_all) {
    Vec3 normal;
    for (int k = 0; k < 3; ++k) {
      const double d = p[k] - c[k];
      if (std::abs(d) >= h[k] - tol) normal[k] = d >= 0.0 ? 1.0 : -1.0;
    }
    p = p + normalized(normal) * (1e-9 * geometry.max_dimension_um());
    out.boundary_limit = true;
  }
  if (m_a_per_m == 0.0) return out;

  const Vec3 dir = normalized(geometry.direction);
  Vec3 field;
  for (int k = 0; k < 3; ++k) {
    const double sigma = m_a_per_m * dir[k];
    if (sigma == 0.0) continue;
    const int i = (k + 1) % 3;
    const int j = (k + 2) % 3;
    const double xa = p[i] - (c[i] + h[i]);
    const double xb = p[i] - (c[i] - h[i]);
    const double ya = p[j] - (c[j] + h[j]);
    const double yb = p[j] - (c[j] - h[j]);
    for (int face = -1; face <= 1; face += 2) {
      const double z = p[k] - (c[k] + face * h[k]);
      const Vec3 local = rectangle_field(xa, xb, ya, yb, z);
      const double s = face * sigma;
      field[i] += s * local.x;
      field[j] += s * local.y;
      field[k] += s * local.z;
    }
  }
  const double scale = kGaussPerAmpPerMeterOver4Pi;
  out.b = {field.x * scale, field.y * scale, field.z * scale};
  return out;
}

StrayField stray_field(std::span<const MagnetizedPrism> prisms, const Vec3& point_um) {
  StrayField total;
  for (const auto& prism : prisms) {
    const auto part = stray_field(prism.geometry, prism.m_a_per_m, point_um);
    total.b = total.b + part.b;
    total.boundary_limit = total.boundary_limit || part.boundary_limit;
  }
  return total;
}

double stray_bz_at_sensor(const MagnetizationModel& model, const FlakeGeometry& geometry,
                          const SensorPlacement& placement, double temperature_k,
                          double h_applied_g, Branch branch) {
  placement.validate();
  const double m = magnetization(model, temperature_k, h_applied_g, branch);
  return stray_field(geometry, m, sensor_point(geometry, placement)).b.bz;
}

double field_at_sensor(const MagnetizationModel& model, const FlakeGeometry& geometry,
                       const SensorPlacement& placement, double temperature_k, double h_applied_g,
                       Branch branch) {
  return std::abs(
      stray_bz_at_sensor(model, geometry, placement, temperature_k, h_applied_g, branch));
}

MagnetizationModel calibrate_m_sat(const MagnetizationModel& model, const FlakeGeometry& geometry,
                                   const SensorPlacement& placement, double temperature_k,
                                   double h_applied_g, Branch branch, double target_g) {
  model.validate();
  placement.validate();
  if (!(target_g >= 0.0)) throw Error(ErrorCode::InvalidInput, "calibration target must be >= 0");
  if (!(temperature_k < model.tc_k)) {
    throw Error(ErrorCode::InvalidInput, "calibration temperature must lie below Tc");
  }
  const double per_unit_m =
      std::abs(stray_field(geometry, 1.0, sensor_point(geometry, placement)).b.bz);
  if (!(per_unit_m > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "sensor sees no z field from this geometry");
  }
  const double h_am = h_applied_g * kAmPerOersted;
  MagnetizationModel unit = model;
  unit.m_sat_a_per_m = 1.0;
  unit.chi_high = 0.0;
  const double shape = magnetization(unit, temperature_k, h_applied_g, branch);  // sign * x^beta
  const double m_now = magnetization(model, temperature_k, h_applied_g, branch);
  const double m_target = (m_now >= 0.0 ? 1.0 : -1.0) * target_g / per_unit_m;
  MagnetizationModel out = model;
  out.m_sat_a_per_m = (m_target - model.chi_high * h_am) / shape;
  if (!(out.m_sat_a_per_m >= 0.0)) {
    throw Error(ErrorCode::InvalidInput, "calibration requires a negative saturation magnetization");
  }
  return out;
}

std::vector<double> inverse_variance_weights(std::span<const double> sigmas) {
  return numfit::inverse_variance_weights(std::vector<double>(sigmas.begin(), sigmas.end()));
}

double critical_curve(double temperature_k, double scale, double tc_k, double beta) {
  const double x = 1.0 - temperature_k / tc_k;
  return x > 0.0 ? scale * std::pow(x, beta) : 0.0;
}

numfit::ResidualProblem critical_problem(std::span<const TcSample> series,
                                         std::optional<double> fixed_beta) {
  std::vector<double> t, b, sig;
  for (const auto& s : series) {
    t.push_back(s.temperature_k);
    b.push_back(s.b_fgt_g);
    sig.push_back(s.sigma_g);
  }
  const auto w = inverse_variance_weights(sig);
  std::vector<double> sw(w.size());
  std::transform(w.begin(), w.end(), sw.begin(), [](double v) { return std::sqrt(v); });

  numfit::ResidualProblem problem;
  problem.param_count = fixed_beta ? 2 : 3;
  auto beta_of = [fixed_beta](const numfit::Vector& p) { return fixed_beta ? *fixed_beta : p[2]; };
  problem.residuals = [t, b, sw, beta_of](const numfit::Vector& p) {
    numfit::Vector r(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      r[static_cast<Eigen::Index>(i)] = sw[i] * (critical_curve(t[i], p[0], p[1], beta_of(p)) - b[i]);
    }
    return r;
  };
  problem.analytic_jacobian = [t, sw, beta_of, fixed_beta](const numfit::Vector& p) {
    numfit::Matrix jac = numfit::Matrix::Zero(static_cast<Eigen::Index>(t.size()), fixed_beta ? 2 : 3);
    const double scale = p[0], tc = p[1], beta = beta_of(p);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = 1.0 - t[i] / tc;
      if (!(x > 0.0)) continue;
      const auto row = static_cast<Eigen::Index>(i);
      const double xb = std::pow(x, beta);
      jac(row, 0) = sw[i] * xb;
      jac(row, 1) = sw[i] * scale * beta * xb / x * t[i] / (tc * tc);
      if (!fixed_beta) jac(row, 2) = sw[i] * scale * xb * std::log(x);
    }
    return jac;
  };
  const double t_min = *std::min_element(t.begin(), t.end());
  const double t_max = *std::max_element(t.begin(), t.end());
  numfit::Vector lower(problem.param_count), upper(problem.param_count);
  lower.head(2) << 0.0, 0.5 * t_min;
  upper.head(2) << std::numeric_limits<double>::infinity(), 2.0 * t_max;
  if (!fixed_beta) {
    lower[2] = 0.05;
    upper[2] = 0.999;
  }
  problem.lower_bounds = lower;
  problem.upper_bounds = upper;
  return problem;
}

TcEstimate estimate_tc(std::span<const TcSample> series, const TcOptions& options) {
  if (series.size() < 5) {
    throw Error(ErrorCode::InvalidInput, "Tc estimation needs at least 5 points");
  }
  for (const auto& s : series) {
    if (!(s.temperature_k > 0.0) || !std::isfinite(s.b_fgt_g) || !(s.sigma_g >= 0.0)) {
      throw Error(ErrorCode::InvalidInput, "Tc series has an invalid row");
    }
  }
  if (options.fixed_beta && !(*options.fixed_beta > 0.0 && *options.fixed_beta < 1.0)) {
    throw Error(ErrorCode::InvalidInput, "fixed beta must lie in (0, 1)");
  }
  std::vector<TcSample> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.temperature_k < b.temperature_k; });
  const bool any_field =
      std::any_of(sorted.begin(), sorted.end(), [](const auto& s) { return s.b_fgt_g > 0.0; });
  if (!any_field) {
    throw Error(ErrorCode::NoTransition, "B_FGT series is identically zero; no transition to fit");
  }

  const auto problem = critical_problem(sorted, options.fixed_beta);
  std::vector<double> sigmas;
  for (const auto& s : sorted) sigmas.push_back(s.sigma_g);
  const auto w = inverse_variance_weights(sigmas);

  std::vector<double> tc_starts;
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    tc_starts.push_back(0.5 * (sorted[i].temperature_k + sorted[i + 1].temperature_k));
  }
  const double last_gap = sorted.back().temperature_k - sorted[sorted.size() - 2].temperature_k;
  tc_starts.push_back(sorted.back().temperature_k + 0.5 * last_gap);

  std::vector<double> beta_starts;
  if (options.fixed_beta) {
    beta_starts = {*options.fixed_beta};
  } else {
    beta_starts = {0.3, 0.5};
  }

  std::optional<numfit::FitResult> best;
  for (double tc0 : tc_starts) {
    for (double beta0 : beta_starts) {
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double g = critical_curve(sorted[i].temperature_k, 1.0, tc0, beta0);
        num += w[i] * g * sorted[i].b_fgt_g;
        den += w[i] * g * g;
      }
      if (!(den > 0.0) || !(num > 0.0)) continue;
      numfit::Vector p0(problem.param_count);
      p0[0] = num / den;
      p0[1] = tc0;
      if (!options.fixed_beta) p0[2] = beta0;
      p0 = problem.project(p0);
      auto fit = numfit::levenberg_marquardt(problem, p0);
      if (!best || fit.residual_norm < best->residual_norm) best = std::move(fit);
    }
  }
  if (!best) {
    throw Error(ErrorCode::NoTransition, "no starting point reproduces the B_FGT series");
  }

  TcEstimate est;
  est.fit = std::move(*best);
  est.b0_scale_g = est.fit.params[0];
  est.tc_k = est.fit.params[1];
  est.beta_crit = options.fixed_beta ? *options.fixed_beta : est.fit.params[2];
  est.extrapolated =
      est.tc_k < sorted.front().temperature_k || est.tc_k > sorted.back().temperature_k;

  double steepest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
    const double dt = sorted[i + 1].temperature_k - sorted[i].temperature_k;
    if (!(dt > 0.0)) continue;
    const double slope = (sorted[i + 1].b_fgt_g - sorted[i].b_fgt_g) / dt;
    if (slope < steepest) {
      steepest = slope;
      est.tc_steepest_k = 0.5 * (sorted[i].temperature_k + sorted[i + 1].temperature_k);
    }
  }
  return est;
}

}  // namespace sicmag::magnet
