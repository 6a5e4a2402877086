#include "sicmag/error.hpp"
#include "sicmag/odmr.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

using namespace sicmag;
using odmr::SynthesisOptions;

namespace {

SynthesisOptions wide(double noise = 0.0, std::uint64_t seed = 0) {
  SynthesisOptions o;
  o.grid = {20.0, 2900.0, 0.5};
  o.noise_sigma = noise;
  o.seed = seed;
  return o;
}

double min_at(const odmr::OdmrSpectrum& s, double lo, double hi) {
  double best = 1e300, where = 0.0;
  for (std::size_t i = 0; i < s.signal.size(); ++i) {
    const double f = s.frequencies_mhz[i];
    if (f >= lo && f <= hi && s.signal[i] < best) {
      best = s.signal[i];
      where = f;
    }
  }
  return where;
}

}  // namespace

TEST_CASE("zero field synthesis is a single merged dip at D") {
  const auto s = odmr::synthesize_spectrum({}, {}, 296.0, wide());
  CHECK(min_at(s, 20.0, 2900.0) == doctest::Approx(1351.0));
  CHECK(detect_peaks(s, 2).size() == 1);
}

TEST_CASE("200 G synthesis dips at the closed-form lines") {
  const auto s = odmr::synthesize_spectrum({}, spin::axial_field(200.0), 296.0, wide());
  CHECK(min_at(s, 20.0, 1351.0) == doctest::Approx(790.5));
  CHECK(min_at(s, 1351.0, 2900.0) == doctest::Approx(1911.5));
  CHECK_FALSE(s.transitions_outside_grid);
}

TEST_CASE("same seed gives identical spectra") {
  const auto a = odmr::synthesize_spectrum({}, spin::axial_field(50.0), 296.0, wide(1e-3, 42));
  const auto b = odmr::synthesize_spectrum({}, spin::axial_field(50.0), 296.0, wide(1e-3, 42));
  const auto c = odmr::synthesize_spectrum({}, spin::axial_field(50.0), 296.0, wide(1e-3, 43));
  CHECK(a.signal == b.signal);
  CHECK(a.signal != c.signal);
}

TEST_CASE("lines beyond the grid raise the warning flag") {
  SynthesisOptions o;
  o.grid = {1300.0, 1400.0, 0.5};
  const auto s = odmr::synthesize_spectrum({}, spin::axial_field(200.0), 296.0, o);
  CHECK(s.transitions_outside_grid);
}

TEST_CASE("synthesis preconditions") {
  SynthesisOptions o = wide();
  o.fwhm_mhz = 0.0;
  CHECK_THROWS_AS(odmr::synthesize_spectrum({}, {}, 296.0, o), Error);
  o = wide(-1.0);
  CHECK_THROWS_AS(odmr::synthesize_spectrum({}, {}, 296.0, o), Error);
}

TEST_CASE("noise-free doublet fit recovers centers to 1e-4 MHz") {
  const auto s = odmr::synthesize_spectrum({}, spin::axial_field(200.0), 296.0, wide());
  const auto fit = odmr::fit_spectrum(s, 2);
  REQUIRE(fit.peaks.size() == 2);
  CHECK(std::abs(fit.peaks[0].center_mhz - 790.5) < 1e-4);
  CHECK(std::abs(fit.peaks[1].center_mhz - 1911.5) < 1e-4);
  CHECK(fit.peaks[0].center_mhz < fit.peaks[1].center_mhz);
  CHECK(fit.baseline == doctest::Approx(1.0));
}

TEST_CASE("flat signal cannot be initialized") {
  odmr::OdmrSpectrum s;
  for (int i = 0; i < 100; ++i) {
    s.frequencies_mhz.push_back(1000.0 + i);
    s.signal.push_back(1.0);
  }
  try {
    odmr::fit_spectrum(s, 1);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Initialization);
  }
}

TEST_CASE("too few samples for the peak count") {
  odmr::OdmrSpectrum s;
  for (int i = 0; i < 10; ++i) {
    s.frequencies_mhz.push_back(1000.0 + i);
    s.signal.push_back(1.0 - 0.01 * (i == 5));
  }
  CHECK_THROWS_AS(odmr::fit_spectrum(s, 2), Error);
}

TEST_CASE("spectrum validation") {
  odmr::OdmrSpectrum s;
  s.frequencies_mhz = {1.0, 2.0, 2.0};
  s.signal = {1.0, 1.0, 1.0};
  CHECK_THROWS_AS(s.validate(), Error);
  s.frequencies_mhz = {1.0, 2.0};
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("reference and probe fields are recovered") {
  const spin::SensorSpinModel m;
  auto ref = odmr::synthesize_spectrum(m, spin::axial_field(200.0), 296.0, wide());
  auto probe = odmr::synthesize_spectrum(m, spin::axial_field(203.2), 296.0, wide());
  const auto er = odmr::extract_field(ref, m);
  const auto ep = odmr::extract_field(probe, m);
  CHECK(er.b_g == doctest::Approx(200.0).epsilon(1e-6));
  CHECK(er.d_est_mhz == doctest::Approx(1351.0).epsilon(1e-6));
  CHECK(ep.b_g == doctest::Approx(203.2).epsilon(1e-6));
  CHECK(er.sigma_b_g >= 0.0);
  const auto d = odmr::differential_field(ep, er);
  CHECK(d.b_fgt_g == doctest::Approx(3.2).epsilon(1e-5));
}

TEST_CASE("zero field doublet reads near zero") {
  const spin::SensorSpinModel m;
  const auto s = odmr::synthesize_spectrum(m, {}, 296.0, wide(5e-4, 3));
  const auto e = odmr::extract_field(s, m);
  CHECK(e.b_g >= 0.0);
  CHECK(e.b_g <= 3.0 * e.sigma_b_g + 0.5);
}

TEST_CASE("noise-free round trip over the sweep range") {
  const spin::SensorSpinModel m;
  for (double b : {0.0, 10.0, 50.0, 200.0, 455.0, 508.0}) {
    SynthesisOptions o = wide();
    o.grid.step_mhz = 0.25;
    const auto s = odmr::synthesize_spectrum(m, spin::axial_field(b), 296.0, o);
    CHECK(std::abs(odmr::extract_field(s, m).b_g - b) < 1e-3);
  }
}

TEST_CASE("beyond the anticrossing the lower line is unfolded") {
  const spin::SensorSpinModel m;
  const double b = 530.0;  // gamma*B > D
  const auto s = odmr::synthesize_spectrum(m, spin::axial_field(b), 296.0, wide());
  const auto e = odmr::extract_field(s, m);
  CHECK(e.beyond_anticrossing);
  CHECK(e.b_g == doctest::Approx(b).epsilon(1e-6));
  CHECK(e.d_est_mhz == doctest::Approx(1351.0).epsilon(1e-6));
}

TEST_CASE("differential field arithmetic") {
  odmr::FieldEstimate p, r;
  p.b_g = 203.2;
  p.sigma_b_g = 0.3;
  r.b_g = 200.0;
  r.sigma_b_g = 0.4;
  auto d = odmr::differential_field(p, r);
  CHECK(d.b_fgt_g == doctest::Approx(3.2));
  CHECK(d.sigma_g == doctest::Approx(0.5));
  CHECK(d.signed_difference_g == doctest::Approx(3.2));
  const auto swapped = odmr::differential_field(r, p);
  CHECK(swapped.b_fgt_g == d.b_fgt_g);
  CHECK(swapped.sigma_g == d.sigma_g);
  p.b_g = 196.8;
  CHECK(odmr::differential_field(p, r).b_fgt_g == doctest::Approx(3.2));
  CHECK(odmr::differential_field(r, r).b_fgt_g == 0.0);
}

TEST_CASE("center errors at SNR 20 stay below fwhm / 20") {
  const spin::SensorSpinModel m;
  std::vector<double> errs;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthesisOptions o = wide(5e-4, 100 + seed);
    o.grid = {600.0, 2100.0, 0.5};
    const auto s = odmr::synthesize_spectrum(m, spin::axial_field(200.0), 296.0, o);
    const auto fit = odmr::fit_spectrum(s, 2);
    errs.push_back(std::max(fit.center_errors_mhz[0], fit.center_errors_mhz[1]));
  }
  std::sort(errs.begin(), errs.end());
  CHECK(errs[94] < 12.0 / 20.0);
}

TEST_CASE("fitted baseline is unbiased on noisy spectra") {
  const spin::SensorSpinModel m;
  int inside = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    SynthesisOptions o = wide(1e-3, 500 + seed);
    o.grid = {600.0, 2100.0, 1.0};
    o.baseline = 0.8;
    const auto s = odmr::synthesize_spectrum(m, spin::axial_field(200.0), 296.0, o);
    const auto fit = odmr::fit_spectrum(s, 2);
    inside += std::abs(fit.baseline - 0.8) <= 3.0 * fit.fit.std_errors[0];
  }
  CHECK(inside >= 95);
}

TEST_CASE("grid refinement changes centers by less than their error") {
  const spin::SensorSpinModel m;
  SynthesisOptions coarse = wide();
  coarse.grid = {600.0, 2100.0, 1.0};
  SynthesisOptions fine = coarse;
  fine.grid.step_mhz = 0.5;
  SynthesisOptions noisy = coarse;
  noisy.noise_sigma = 5e-4;
  noisy.seed = 9;
  const auto b = spin::axial_field(200.0);
  const auto a = odmr::fit_spectrum(odmr::synthesize_spectrum(m, b, 296.0, coarse), 2);
  const auto f = odmr::fit_spectrum(odmr::synthesize_spectrum(m, b, 296.0, fine), 2);
  const auto n = odmr::fit_spectrum(odmr::synthesize_spectrum(m, b, 296.0, noisy), 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(a.peaks[k].center_mhz - f.peaks[k].center_mhz) < n.center_errors_mhz[k]);
  }
}
