#pragma once

#include "sicmag/magnet.hpp"
#include "sicmag/numfit.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sicmag::testing {

// Largest column-wise relative deviation between the analytic and the
// central-difference Jacobian. Columns that vanish in both are skipped.
inline double jacobian_mismatch(const numfit::ResidualProblem& problem, const numfit::Vector& p) {
  const numfit::Matrix ja = problem.analytic_jacobian(p);
  const numfit::Matrix jf = numfit::finite_difference_jacobian(problem, p, 1e-6);
  double worst = 0.0;
  for (Eigen::Index c = 0; c < ja.cols(); ++c) {
    const double scale = std::max(ja.col(c).cwiseAbs().maxCoeff(), jf.col(c).cwiseAbs().maxCoeff());
    if (scale == 0.0) continue;
    worst = std::max(worst, (ja.col(c) - jf.col(c)).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

// Point-dipole field in G of moment M·V (A/m · µm³) at offset r (µm).
struct Dipole {
  double bx, by, bz;
};

inline Dipole dipole_field(double m_a_per_m, double volume_um3, const double u[3], const double r[3]) {
  const double rn = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  const double rh[3] = {r[0] / rn, r[1] / rn, r[2] / rn};
  const double ur = u[0] * rh[0] + u[1] * rh[1] + u[2] * rh[2];
  const double k = 1e-3 * m_a_per_m * volume_um3 / (rn * rn * rn);
  return {k * (3.0 * ur * rh[0] - u[0]), k * (3.0 * ur * rh[1] - u[1]), k * (3.0 * ur * rh[2] - u[2])};
}

inline double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Midpoint-rule surface-charge integration with n×n panels per face.
inline magnet::Vec3 quadrature_field(const magnet::FlakeGeometry& g, double m_a_per_m, const magnet::Vec3& p,
                                     int n) {
  const magnet::Vec3 dir = g.direction * (1.0 / g.direction.norm());
  magnet::Vec3 b;
  for (int k = 0; k < 3; ++k) {
    const double sigma_plus = m_a_per_m * dir[k];
    if (sigma_plus == 0.0) continue;
    const int i = (k + 1) % 3, j = (k + 2) % 3;
    const double di = 2.0 * g.half_extents_um[i] / n, dj = 2.0 * g.half_extents_um[j] / n;
    for (int side = -1; side <= 1; side += 2) {
      const double sigma = side * sigma_plus;
      for (int a = 0; a < n; ++a) {
        for (int c = 0; c < n; ++c) {
          magnet::Vec3 q;
          q[k] = g.center_um[k] + side * g.half_extents_um[k];
          q[i] = g.center_um[i] - g.half_extents_um[i] + (a + 0.5) * di;
          q[j] = g.center_um[j] - g.half_extents_um[j] + (c + 0.5) * dj;
          const magnet::Vec3 d = p - q;
          const double r = d.norm();
          b = b + d * (1e-3 * sigma * di * dj / (r * r * r));
        }
      }
    }
  }
  return b;
}

// Distance from p to the closed box.
inline double box_distance(const magnet::FlakeGeometry& g, const magnet::Vec3& p) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = std::max(0.0, std::abs(p[k] - g.center_um[k]) - g.half_extents_um[k]);
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace sicmag::testing
