#include "sicmag/error.hpp"
#include "sicmag/numfit.hpp"
#include "sicmag/odmr.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

using namespace sicmag;
using numfit::Matrix;
using numfit::ResidualProblem;
using numfit::Vector;

namespace {

ResidualProblem line_problem(const std::vector<double>& x, const std::vector<double>& y) {
  ResidualProblem p;
  p.param_count = 2;
  p.residuals = [x, y](const Vector& q) {
    Vector r(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) r[static_cast<Eigen::Index>(i)] = q[0] * x[i] + q[1] - y[i];
    return r;
  };
  return p;
}

ResidualProblem rosenbrock() {
  ResidualProblem p;
  p.param_count = 2;
  p.residuals = [](const Vector& q) {
    Vector r(2);
    r << 10.0 * (q[1] - q[0] * q[0]), 1.0 - q[0];
    return r;
  };
  return p;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

}  // namespace

TEST_CASE("exact line data gives slope 2 and intercept 1") {
  std::vector<double> x, y;
  for (int i = 0; i < 10; ++i) {
    x.push_back(i * 0.5);
    y.push_back(2.0 * x.back() + 1.0);
  }
  const auto fit = numfit::levenberg_marquardt(line_problem(x, y), vec({0.0, 0.0}));
  CHECK(fit.converged);
  CHECK(fit.params[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.params[1] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(fit.residual_norm < 1e-9);
}

TEST_CASE("rosenbrock converges to (1, 1)") {
  const auto fit = numfit::levenberg_marquardt(rosenbrock(), vec({-1.2, 1.0}));
  CHECK(fit.converged);
  CHECK(std::abs(fit.params[0] - 1.0) < 1e-6);
  CHECK(std::abs(fit.params[1] - 1.0) < 1e-6);
}

TEST_CASE("linear least squares matches the normal equations") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> nd(0.0, 0.3);
  std::vector<double> x, y;
  for (int i = 0; i < 40; ++i) {
    x.push_back(0.1 * i);
    y.push_back(-0.7 * x.back() + 3.0 + nd(rng));
  }
  Matrix a(40, 2);
  Vector b(40);
  for (int i = 0; i < 40; ++i) {
    a(i, 0) = x[static_cast<std::size_t>(i)];
    a(i, 1) = 1.0;
    b[i] = y[static_cast<std::size_t>(i)];
  }
  const Vector exact = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  numfit::LmOptions opts;
  opts.step_tolerance = 1e-14;
  opts.gradient_tolerance = 1e-14;
  const auto fit = numfit::levenberg_marquardt(line_problem(x, y), vec({1.0, 1.0}), opts);
  CHECK((fit.params - exact).norm() / exact.norm() < 1e-10);
}

TEST_CASE("accepted residual norms never increase") {
  const auto fit = numfit::levenberg_marquardt(rosenbrock(), vec({-1.2, 1.0}));
  REQUIRE(fit.accepted_norms.size() >= 2);
  for (std::size_t i = 1; i < fit.accepted_norms.size(); ++i) {
    CHECK(fit.accepted_norms[i] <= fit.accepted_norms[i - 1]);
  }
  CHECK(fit.residual_norm <= fit.accepted_norms.front());
}

TEST_CASE("residual_norm is the norm of residuals at params") {
  const auto p = rosenbrock();
  const auto fit = numfit::levenberg_marquardt(p, vec({0.5, 2.0}));
  CHECK(fit.residual_norm == doctest::Approx(p.residuals(fit.params).norm()).epsilon(1e-14));
}

TEST_CASE("bounded fits stay inside the box") {
  auto p = rosenbrock();
  p.lower_bounds = vec({-2.0, -2.0});
  p.upper_bounds = vec({0.5, 3.0});
  const auto fit = numfit::levenberg_marquardt(p, vec({-1.2, 1.0}));
  CHECK(fit.params[0] <= 0.5);
  CHECK(fit.params[0] >= -2.0);
  CHECK(fit.params[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(fit.params[1] == doctest::Approx(0.25).epsilon(1e-4));
}

TEST_CASE("covariance diagonal equals squared standard errors") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd(0.0, 0.1);
  std::vector<double> x, y;
  for (int i = 0; i < 25; ++i) {
    x.push_back(i);
    y.push_back(0.3 * i - 2.0 + nd(rng));
  }
  const auto fit = numfit::levenberg_marquardt(line_problem(x, y), vec({0.0, 0.0}));
  REQUIRE(fit.covariance.has_value());
  for (Eigen::Index i = 0; i < 2; ++i) {
    CHECK(fit.std_errors[i] >= 0.0);
    CHECK((*fit.covariance)(i, i) == doctest::Approx(fit.std_errors[i] * fit.std_errors[i]));
  }
  CHECK((*fit.covariance - fit.covariance->transpose()).norm() == doctest::Approx(0.0));
}

TEST_CASE("exactly determined problems report infinite errors") {
  const auto fit = numfit::levenberg_marquardt(rosenbrock(), vec({-1.2, 1.0}));
  CHECK(std::isinf(fit.std_errors[0]));
  CHECK_FALSE(fit.covariance.has_value());
}

TEST_CASE("non-finite residual at init is invalid input") {
  ResidualProblem p;
  p.param_count = 1;
  p.residuals = [](const Vector& q) { return vec({std::log(q[0])}); };
  try {
    numfit::levenberg_marquardt(p, vec({-1.0}));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidInput);
  }
}

TEST_CASE("init outside bounds and wrong length are rejected") {
  auto p = rosenbrock();
  p.lower_bounds = vec({0.0, 0.0});
  p.upper_bounds = vec({2.0, 2.0});
  CHECK_THROWS_AS(numfit::levenberg_marquardt(p, vec({-1.0, 1.0})), Error);
  CHECK_THROWS_AS(numfit::levenberg_marquardt(p, vec({1.0})), Error);
  p.upper_bounds = vec({-1.0, 2.0});
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("iteration cap yields an unconverged result") {
  numfit::LmOptions opts;
  opts.max_iterations = 2;
  const auto fit = numfit::levenberg_marquardt(rosenbrock(), vec({-1.2, 1.0}), opts);
  CHECK_FALSE(fit.converged);
  CHECK(fit.termination == numfit::Termination::MaxIterations);
}

TEST_CASE("finite differences of a linear model equal the design matrix") {
  const std::vector<double> x{0.0, 1.0, 2.5, -3.0};
  const std::vector<double> y(4, 0.0);
  const auto p = line_problem(x, y);
  for (const auto& q : {vec({1.0, 2.0}), vec({-5.0, 0.0}), vec({100.0, -7.0})}) {
    const Matrix j = numfit::finite_difference_jacobian(p, q);
    for (int i = 0; i < 4; ++i) {
      CHECK(j(i, 0) == doctest::Approx(x[static_cast<std::size_t>(i)]).epsilon(1e-8));
      CHECK(j(i, 1) == doctest::Approx(1.0).epsilon(1e-8));
    }
  }
}

TEST_CASE("finite difference of p squared at 3 is 6") {
  ResidualProblem p;
  p.param_count = 1;
  p.residuals = [](const Vector& q) { return vec({q[0] * q[0]}); };
  const Matrix j = numfit::finite_difference_jacobian(p, vec({3.0}), 1e-4);
  CHECK(j(0, 0) == doctest::Approx(6.0).epsilon(1e-8));
}

TEST_CASE("central differences converge at second order") {
  ResidualProblem p;
  p.param_count = 1;
  p.residuals = [](const Vector& q) { return vec({std::sin(q[0]) * std::exp(q[0])}); };
  const double x = 0.7;
  const double exact = std::exp(x) * (std::sin(x) + std::cos(x));
  const double h = 1e-2;
  const double e1 = std::abs(numfit::finite_difference_jacobian(p, vec({x}), h)(0, 0) - exact);
  const double e2 = std::abs(numfit::finite_difference_jacobian(p, vec({x}), h / 2)(0, 0) - exact);
  CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.05));
}

TEST_CASE("non-finite stencil value names the parameter") {
  ResidualProblem p;
  p.param_count = 2;
  p.residuals = [](const Vector& q) { return vec({q[0], std::sqrt(q[1])}); };
  try {
    numfit::finite_difference_jacobian(p, vec({1.0, 0.0}), 1e-3);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Evaluation);
    CHECK(std::string(e.what()).find('1') != std::string::npos);
  }
}

TEST_CASE("single lorentzian round trip to 1e-6 relative") {
  std::vector<double> f, s;
  const odmr::LorentzianPeak truth{1351.0, 12.0, 0.01};
  for (double x = 1300.0; x <= 1400.0; x += 0.5) {
    f.push_back(x);
    s.push_back(1.0 + truth(x));
  }
  const auto p = odmr::lorentzian_problem(f, s, 1);
  Vector init(4);
  init << 1.001, 1352.5, 10.0, 0.008;
  const auto fit = numfit::levenberg_marquardt(p, init);
  CHECK(fit.converged);
  CHECK(std::abs(fit.params[1] / 1351.0 - 1.0) < 1e-6);
  CHECK(std::abs(fit.params[2] / 12.0 - 1.0) < 1e-6);
  CHECK(std::abs(fit.params[3] / 0.01 - 1.0) < 1e-6);
}

TEST_CASE("inverse variance weights fill zero sigmas with the median") {
  const auto w = numfit::inverse_variance_weights({1.0, 0.5, 0.0, 2.0});
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(4.0));
  CHECK(w[2] == doctest::Approx(1.0));
  CHECK(w[3] == doctest::Approx(0.25));
}
