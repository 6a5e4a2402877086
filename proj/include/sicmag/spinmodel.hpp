#pragma once

// Spin-1 ground-state model of the PL6 divacancy in 4H-SiC.
//
// Energies are in MHz, fields in G, temperatures in K. The z axis is the
// defect axis, which for PL6 coincides with the crystal c axis. Matrices use
// the basis ordering |m_s=+1>, |m_s=0>, |m_s=-1>.

#include <Eigen/Dense>

namespace sicmag::spin {

// g = 2.0023 times the Bohr magneton over h, in MHz/G.
inline constexpr double kDefaultGamma = 2.8025;
inline constexpr double kDefaultD0 = 1351.0;
inline constexpr double kDefaultTref = 296.0;

struct SensorSpinModel {
  double d0_mhz = kDefaultD0;
  // Real spectra self-calibrate D(T) from the reference position, so the
  // slope defaults to zero.
  double dd_dt_mhz_per_k = 0.0;
  double t_ref_k = kDefaultTref;
  double e_mhz = 0.0;
  double gamma_mhz_per_g = kDefaultGamma;

  // Throws InvalidInput unless D0 > 0, gamma > 0 and 0 <= E < D0.
  void validate() const;
};

struct FieldVector {
  double bx = 0.0;
  double by = 0.0;
  double bz = 0.0;

  double norm() const;
  FieldVector operator+(const FieldVector& o) const { return {bx + o.bx, by + o.by, bz + o.bz}; }
  FieldVector operator*(double s) const { return {bx * s, by * s, bz * s}; }
};

inline FieldVector axial_field(double bz_g) { return {0.0, 0.0, bz_g}; }

struct TransitionPair {
  double f_minus_mhz = 0.0;
  double f_plus_mhz = 0.0;

  double center() const { return 0.5 * (f_minus_mhz + f_plus_mhz); }
};

struct SplittingField {
  double b_g = 0.0;
  double center_mhz = 0.0;  // estimate of D(T)
};

double zfs_at(const SensorSpinModel& model, double temperature_k);

Eigen::Matrix3cd hamiltonian(const SensorSpinModel& model, const FieldVector& b,
                             double temperature_k);

// Energies of the eigenstates relative to the dominantly m_s=0 state, sorted
// ascending. The values are signed: beyond the ground-state level
// anticrossing (gamma*Bz > D) f_minus is negative and the physical resonance
// sits at |f_minus|.
TransitionPair transition_frequencies(const SensorSpinModel& model, const FieldVector& b,
                                      double temperature_k);

SplittingField field_from_splitting(const SensorSpinModel& model, double f_minus_mhz,
                                    double f_plus_mhz);

}  // namespace sicmag::spin
