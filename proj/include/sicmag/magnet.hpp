#pragma once

// Phenomenological model of the Fe3GaTe2 flake: critical-law magnetization
// with a rectangular hysteresis loop, the magnetostatic stray field of a
// uniformly magnetized rectangular prism, and Curie-temperature estimation
// from a B_FGT(T) series.
//
// Units: magnetization A/m, applied field and stray field G, lengths µm
// (sensor depth in nm), temperatures K.

#include "sicmag/numfit.hpp"
#include "sicmag/spinmodel.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace sicmag::magnet {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const;
};

struct MagnetizationModel {
  double m_sat_a_per_m = 3.0e5;
  double tc_k = 360.0;
  double beta_crit = 0.5;
  double hc_g = 10.0;
  double chi_para = 0.0;  // susceptibility above Tc
  double chi_high = 0.0;  // optional linear high-field term below Tc, off by default

  void validate() const;
};

enum class Branch { Ascending, Descending };

std::string_view to_string(Branch b) noexcept;
Branch parse_branch(std::string_view text);  // throws InvalidInput

// Signed magnetization along the easy axis.
double magnetization(const MagnetizationModel& model, double temperature_k, double h_applied_g,
                     Branch branch);
double magnetization(const MagnetizationModel& model, double temperature_k, double h_applied_g,
                     std::string_view branch);

struct FlakeGeometry {
  Vec3 half_extents_um{5.0, 5.0, 0.01};
  Vec3 center_um{0.0, 0.0, 0.01};
  Vec3 direction{0.0, 0.0, 1.0};  // unit magnetization direction

  void validate() const;
  double volume_um3() const;
  double max_dimension_um() const;
  bool contains(const Vec3& p) const;  // strictly inside
};

struct SensorPlacement {
  double offset_x_um = 5.5;
  double offset_y_um = 0.0;
  double depth_nm = 40.0;

  void validate() const;
};

// The SiC surface is the bottom face of the flake; the sensor sits depth_nm below it.
Vec3 sensor_point(const FlakeGeometry& geometry, const SensorPlacement& placement);

struct StrayField {
  spin::FieldVector b;
  // Set when the point lies on the prism surface; the field is then
  // evaluated 1e-9 x the largest dimension outside along the outward normal.
  bool boundary_limit = false;
};

StrayField stray_field(const FlakeGeometry& geometry, double m_a_per_m, const Vec3& point_um);

struct MagnetizedPrism {
  FlakeGeometry geometry;
  double m_a_per_m = 0.0;
};

// Linear superposition, e.g. for multi-domain flakes.
StrayField stray_field(std::span<const MagnetizedPrism> prisms, const Vec3& point_um);

// |B_z| of the stray field at the sensor, in G.
double field_at_sensor(const MagnetizationModel& model, const FlakeGeometry& geometry,
                       const SensorPlacement& placement, double temperature_k, double h_applied_g,
                       Branch branch);

// Signed z component used when building B_tot = B_0 + B_z.
double stray_bz_at_sensor(const MagnetizationModel& model, const FlakeGeometry& geometry,
                          const SensorPlacement& placement, double temperature_k,
                          double h_applied_g, Branch branch);

// Rescales M_sat so that field_at_sensor(T, H, branch) equals target_g.
MagnetizationModel calibrate_m_sat(const MagnetizationModel& model, const FlakeGeometry& geometry,
                                   const SensorPlacement& placement, double temperature_k,
                                   double h_applied_g, Branch branch, double target_g);

struct TcSample {
  double temperature_k = 0.0;
  double b_fgt_g = 0.0;
  double sigma_g = 0.0;
};

struct TcOptions {
  // Holds the critical exponent fixed instead of fitting it.
  std::optional<double> fixed_beta;
};

struct TcEstimate {
  double tc_k = 0.0;
  double beta_crit = 0.0;
  double b0_scale_g = 0.0;
  // Midpoint of the steepest negative finite-difference slope of B_FGT(T).
  double tc_steepest_k = 0.0;
  bool extrapolated = false;  // fitted Tc outside the sampled temperatures
  numfit::FitResult fit;
};

double critical_curve(double temperature_k, double scale, double tc_k, double beta);

// Weighted residuals (model - B)/sigma for params (scale, Tc[, beta]).
numfit::ResidualProblem critical_problem(std::span<const TcSample> series,
                                         std::optional<double> fixed_beta = std::nullopt);

TcEstimate estimate_tc(std::span<const TcSample> series, const TcOptions& options = {});

// Weights 1/sigma²; zero sigmas take the median of the positive weights.
std::vector<double> inverse_variance_weights(std::span<const double> sigmas);

}  // namespace sicmag::magnet
