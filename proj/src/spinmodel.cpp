#include "sicmag/spinmodel.hpp"

#include "sicmag/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace sicmag::spin {

namespace {

using Complex = std::complex<double>;

struct SpinOperators {
  Eigen::Matrix3cd sx, sy, sz;
};

const SpinOperators& spin_one() {
  static const SpinOperators ops = [] {
    SpinOperators s;
    const double r = 1.0 / std::sqrt(2.0);
    const Complex i(0.0, 1.0);
    s.sx << 0, r, 0,
            r, 0, r,
            0, r, 0;
    s.sy << 0, -i * r, 0,
            i * r, 0, -i * r,
            0, i * r, 0;
    s.sz << 1, 0, 0,
            0, 0, 0,
            0, 0, -1;
    return s;
  }();
  return ops;
}

constexpr Eigen::Index kMs0 = 1;

}  // namespace

void SensorSpinModel::validate() const {
  if (!(d0_mhz > 0.0) || !std::isfinite(d0_mhz)) {
    throw Error(ErrorCode::InvalidInput, "sensor model: D0 must be positive");
  }
  if (!(gamma_mhz_per_g > 0.0) || !std::isfinite(gamma_mhz_per_g)) {
    throw Error(ErrorCode::InvalidInput, "sensor model: gamma must be positive");
  }
  if (!(e_mhz >= 0.0) || !(e_mhz < d0_mhz)) {
    throw Error(ErrorCode::InvalidInput, "sensor model: E must satisfy 0 <= E < D0");
  }
  if (!std::isfinite(dd_dt_mhz_per_k) || !(t_ref_k > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "sensor model: invalid temperature dependence");
  }
}

double FieldVector::norm() const { return std::sqrt(bx * bx + by * by + bz * bz); }

double zfs_at(const SensorSpinModel& model, double temperature_k) {
  if (!(temperature_k > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "temperature must be positive");
  }
  const double d = model.d0_mhz + model.dd_dt_mhz_per_k * (temperature_k - model.t_ref_k);
  if (!(d > 0.0)) {
    throw Error(ErrorCode::ModelRange, "zero-field splitting is non-positive at this temperature");
  }
  return d;
}

Eigen::Matrix3cd hamiltonian(const SensorSpinModel& model, const FieldVector& b,
                             double temperature_k) {
  model.validate();
  if (!std::isfinite(b.bx) || !std::isfinite(b.by) || !std::isfinite(b.bz)) {
    throw Error(ErrorCode::InvalidInput, "field components must be finite");
  }
  const auto& s = spin_one();
  const double d = zfs_at(model, temperature_k);
  const Eigen::Matrix3cd id = Eigen::Matrix3cd::Identity();
  Eigen::Matrix3cd h = d * (s.sz * s.sz - (2.0 / 3.0) * id) +
                       model.e_mhz * (s.sx * s.sx - s.sy * s.sy) +
                       model.gamma_mhz_per_g * (b.bx * s.sx + b.by * s.sy + b.bz * s.sz);
  return h;
}

TransitionPair transition_frequencies(const SensorSpinModel& model, const FieldVector& b,
                                      double temperature_k) {
  const Eigen::Matrix3cd h = hamiltonian(model, b, temperature_k);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> solver(h);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::Evaluation, "eigen-decomposition of the spin Hamiltonian failed");
  }
  const Eigen::Vector3d& energies = solver.eigenvalues();
  const Eigen::Matrix3cd& states = solver.eigenvectors();

  Eigen::Index zero_state = 0;
  double best_weight = -1.0;
  for (Eigen::Index k = 0; k < 3; ++k) {
    const double weight = std::norm(states(kMs0, k));
    if (weight > best_weight) {
      best_weight = weight;
      zero_state = k;
    }
  }
  if (best_weight < 0.5) {
    throw Error(ErrorCode::DegenerateRegime,
                "no eigenstate is dominantly m_s=0; the field is too close to a level anticrossing");
  }

  double f[2];
  int idx = 0;
  for (Eigen::Index k = 0; k < 3; ++k) {
    if (k == zero_state) continue;
    f[idx++] = energies[k] - energies[zero_state];
  }
  if (f[0] > f[1]) std::swap(f[0], f[1]);
  return {f[0], f[1]};
}

SplittingField field_from_splitting(const SensorSpinModel& model, double f_minus_mhz,
                                    double f_plus_mhz) {
  model.validate();
  if (!std::isfinite(f_minus_mhz) || !std::isfinite(f_plus_mhz)) {
    throw Error(ErrorCode::InvalidInput, "transition frequencies must be finite");
  }
  if (f_plus_mhz < f_minus_mhz) {
    throw Error(ErrorCode::InvalidInput, "negative splitting: f_plus is below f_minus");
  }
  return {(f_plus_mhz - f_minus_mhz) / (2.0 * model.gamma_mhz_per_g),
          0.5 * (f_plus_mhz + f_minus_mhz)};
}

}  // namespace sicmag::spin
