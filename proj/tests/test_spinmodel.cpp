#include "sicmag/error.hpp"
#include "sicmag/spinmodel.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace sicmag;
using spin::SensorSpinModel;

TEST_CASE("zfs follows the linear temperature model") {
  SensorSpinModel m;
  CHECK(spin::zfs_at(m, 200.0) == 1351.0);
  CHECK(spin::zfs_at(m, 400.0) == 1351.0);
  m.dd_dt_mhz_per_k = -0.1;
  CHECK(spin::zfs_at(m, m.t_ref_k) == 1351.0);
  CHECK(spin::zfs_at(m, m.t_ref_k + 10.0) == doctest::Approx(1350.0));
  m.dd_dt_mhz_per_k = -10.0;
  CHECK_THROWS_AS(spin::zfs_at(m, 1000.0), Error);
  CHECK_THROWS_AS(spin::zfs_at(SensorSpinModel{}, 0.0), Error);
}

TEST_CASE("model validation") {
  SensorSpinModel m;
  CHECK_NOTHROW(m.validate());
  m.e_mhz = 2000.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = {};
  m.gamma_mhz_per_g = 0.0;
  CHECK_THROWS_AS(m.validate(), Error);
  m = {};
  m.d0_mhz = -1.0;
  CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("zero field spectrum is the degenerate doublet") {
  const SensorSpinModel m;
  const auto h = spin::hamiltonian(m, {}, 296.0);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(h);
  const auto ev = es.eigenvalues();
  CHECK(ev[0] == doctest::Approx(-2.0 * 1351.0 / 3.0));
  CHECK(ev[1] == doctest::Approx(1351.0 / 3.0));
  CHECK(ev[2] == doctest::Approx(1351.0 / 3.0));
  const auto tr = spin::transition_frequencies(m, {}, 296.0);
  CHECK(tr.f_minus_mhz == doctest::Approx(1351.0));
  CHECK(tr.f_plus_mhz == doctest::Approx(1351.0));
}

TEST_CASE("200 G gives 790.5 and 1911.5 MHz") {
  const auto tr = spin::transition_frequencies(SensorSpinModel{}, spin::axial_field(200.0), 296.0);
  CHECK(tr.f_minus_mhz == doctest::Approx(790.5).epsilon(1e-12));
  CHECK(tr.f_plus_mhz == doctest::Approx(1911.5).epsilon(1e-12));
  const auto sf = spin::field_from_splitting(SensorSpinModel{}, 790.5, 1911.5);
  CHECK(sf.b_g == doctest::Approx(200.0).epsilon(1e-12));
  CHECK(sf.center_mhz == doctest::Approx(1351.0));
}

TEST_CASE("field from splitting edge cases") {
  const SensorSpinModel m;
  CHECK(spin::field_from_splitting(m, 1351.0, 1351.0).b_g == 0.0);
  CHECK_THROWS_AS(spin::field_from_splitting(m, 1400.0, 1300.0), Error);
}

TEST_CASE("a few gauss difference between two pairs") {
  const SensorSpinModel m;
  const auto probe = spin::transition_frequencies(m, spin::axial_field(203.2), 296.0);
  const auto ref = spin::transition_frequencies(m, spin::axial_field(200.0), 296.0);
  const double bp = spin::field_from_splitting(m, probe.f_minus_mhz, probe.f_plus_mhz).b_g;
  const double br = spin::field_from_splitting(m, ref.f_minus_mhz, ref.f_plus_mhz).b_g;
  CHECK(bp - br == doctest::Approx(3.2).epsilon(1e-9));
}

TEST_CASE("hamiltonian is traceless and hermitian") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  SensorSpinModel m;
  m.e_mhz = 5.0;
  for (int i = 0; i < 50; ++i) {
    const spin::FieldVector b{u(rng), u(rng), u(rng)};
    const auto h = spin::hamiltonian(m, b, 300.0);
    CHECK(std::abs(h.trace()) < 1e-9);
    CHECK((h - h.adjoint()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(h);
    CHECK(std::abs(es.eigenvalues().sum()) < 1e-9);
  }
}

TEST_CASE("axial round trip and evenness in Bz") {
  const SensorSpinModel m;
  for (double bz = -600.0; bz <= 600.0; bz += 7.3) {
    const auto tr = spin::transition_frequencies(m, spin::axial_field(bz), 296.0);
    const auto mirror = spin::transition_frequencies(m, spin::axial_field(-bz), 296.0);
    CHECK(tr.f_minus_mhz == doctest::Approx(mirror.f_minus_mhz).epsilon(1e-12));
    CHECK(tr.f_plus_mhz == doctest::Approx(mirror.f_plus_mhz).epsilon(1e-12));
    CHECK(tr.center() == doctest::Approx(1351.0).epsilon(1e-13));
    const double b = spin::field_from_splitting(m, tr.f_minus_mhz, tr.f_plus_mhz).b_g;
    CHECK(std::abs(b - std::abs(bz)) < 1e-9);
  }
}

TEST_CASE("transverse zero-field splitting separates the lines by 2E") {
  SensorSpinModel m;
  m.e_mhz = 10.0;
  const auto tr = spin::transition_frequencies(m, {}, 296.0);
  CHECK(tr.f_plus_mhz - tr.f_minus_mhz == doctest::Approx(20.0).epsilon(1e-9));
}
