#include "sicmag/numfit.hpp"

#include "sicmag/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sicmag::numfit {

namespace {

bool all_finite(const Vector& v) { return v.allFinite(); }

Vector eval_residuals(const ResidualProblem& problem, const Vector& params) {
  return problem.residuals(params);
}

double scaled_gradient_norm(const Matrix& jac, const Vector& r) {
  const double rnorm = r.norm();
  if (rnorm == 0.0) return 0.0;
  double worst = 0.0;
  for (Eigen::Index j = 0; j < jac.cols(); ++j) {
    const double cnorm = jac.col(j).norm();
    if (cnorm == 0.0) continue;
    worst = std::max(worst, std::abs(jac.col(j).dot(r)) / (cnorm * rnorm));
  }
  return worst;
}

}  // namespace

std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::StepTolerance: return "step-tolerance";
    case Termination::GradientTolerance: return "gradient-tolerance";
    case Termination::ZeroResidual: return "zero-residual";
    case Termination::MaxIterations: return "max-iterations";
  }
  return "unknown";
}

void ResidualProblem::validate() const {
  if (param_count <= 0) {
    throw Error(ErrorCode::InvalidInput, "residual problem needs at least one parameter");
  }
  if (!residuals) {
    throw Error(ErrorCode::InvalidInput, "residual problem has no residual function");
  }
  if (lower_bounds && lower_bounds->size() != param_count) {
    throw Error(ErrorCode::InvalidInput, "lower bounds length does not match param_count");
  }
  if (upper_bounds && upper_bounds->size() != param_count) {
    throw Error(ErrorCode::InvalidInput, "upper bounds length does not match param_count");
  }
  if (lower_bounds && upper_bounds) {
    for (Eigen::Index j = 0; j < param_count; ++j) {
      if (!((*lower_bounds)[j] <= (*upper_bounds)[j])) {
        throw Error(ErrorCode::InvalidInput,
                    "lower bound exceeds upper bound for parameter " + std::to_string(j));
      }
    }
  }
}

bool ResidualProblem::within_bounds(const Vector& params) const {
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    if (lower_bounds && params[j] < (*lower_bounds)[j]) return false;
    if (upper_bounds && params[j] > (*upper_bounds)[j]) return false;
  }
  return true;
}

Vector ResidualProblem::project(Vector params) const {
  if (lower_bounds) params = params.cwiseMax(*lower_bounds);
  if (upper_bounds) params = params.cwiseMin(*upper_bounds);
  return params;
}

Matrix finite_difference_jacobian(const ResidualProblem& problem, const Vector& params,
                                  double rel_step) {
  if (!(rel_step > 0.0)) {
    throw Error(ErrorCode::InvalidInput, "finite-difference step must be positive");
  }
  const Vector r0 = eval_residuals(problem, params);
  if (!all_finite(r0)) {
    throw Error(ErrorCode::Evaluation, "non-finite residual at the differentiation point");
  }
  const double lo_inf = -std::numeric_limits<double>::infinity();
  const double hi_inf = std::numeric_limits<double>::infinity();

  Matrix jac(r0.size(), params.size());
  for (Eigen::Index j = 0; j < params.size(); ++j) {
    const double p = params[j];
    const double lo = problem.lower_bounds ? (*problem.lower_bounds)[j] : lo_inf;
    const double hi = problem.upper_bounds ? (*problem.upper_bounds)[j] : hi_inf;
    double h = rel_step * (p != 0.0 ? std::abs(p) : 1.0);

    auto at = [&](double value) {
      Vector shifted = params;
      shifted[j] = value;
      Vector r = eval_residuals(problem, shifted);
      if (r.size() != r0.size()) {
        throw Error(ErrorCode::Evaluation, "residual length changed while differentiating");
      }
      if (!all_finite(r)) {
        throw Error(ErrorCode::Evaluation,
                    "non-finite residual while differentiating parameter " + std::to_string(j));
      }
      return r;
    };

    if (p - h >= lo && p + h <= hi) {
      jac.col(j) = (at(p + h) - at(p - h)) / (2.0 * h);
    } else if (p + 2.0 * h <= hi) {
      jac.col(j) = (-3.0 * r0 + 4.0 * at(p + h) - at(p + 2.0 * h)) / (2.0 * h);
    } else if (p - 2.0 * h >= lo) {
      jac.col(j) = (3.0 * r0 - 4.0 * at(p - h) + at(p - 2.0 * h)) / (2.0 * h);
    } else {
      h = std::min(p - lo, hi - p);
      if (h > 0.0) {
        jac.col(j) = (at(p + h) - at(p - h)) / (2.0 * h);
      } else {
        jac.col(j).setZero();  // parameter pinned by lower == upper
      }
    }
  }
  return jac;
}

Matrix jacobian(const ResidualProblem& problem, const Vector& params, double rel_step) {
  if (problem.analytic_jacobian) return problem.analytic_jacobian(params);
  return finite_difference_jacobian(problem, params, rel_step);
}

std::optional<Matrix> estimate_covariance(const Matrix& jac, double residual_norm) {
  const Eigen::Index m = jac.rows();
  const Eigen::Index n = jac.cols();
  if (m <= n) return std::nullopt;
  Eigen::JacobiSVD<Matrix> svd(jac, Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  if (s.size() == 0 || !(s[0] > 0.0)) return std::nullopt;
  const double cutoff = s[0] * 1e-12;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (!(s[k] > cutoff)) return std::nullopt;
  }
  const double sigma2 = residual_norm * residual_norm / static_cast<double>(m - n);
  const Matrix& v = svd.matrixV();
  Matrix cov = v * s.cwiseInverse().cwiseAbs2().asDiagonal() * v.transpose();
  cov *= sigma2;
  return Matrix(0.5 * (cov + cov.transpose()));
}

FitResult levenberg_marquardt(const ResidualProblem& problem, const Vector& init,
                              const LmOptions& options) {
  problem.validate();
  if (init.size() != problem.param_count) {
    throw Error(ErrorCode::InvalidInput, "init length does not match param_count");
  }
  if (!problem.within_bounds(init)) {
    throw Error(ErrorCode::InvalidInput, "initial parameters lie outside the bounds");
  }

  Vector p = init;
  Vector r = eval_residuals(problem, p);
  if (r.size() == 0 || !all_finite(r)) {
    throw Error(ErrorCode::InvalidInput, "non-finite residual at the initial parameters");
  }
  const Eigen::Index m = r.size();
  const Eigen::Index n = problem.param_count;

  FitResult result;
  double cost = r.squaredNorm();
  result.accepted_norms.push_back(std::sqrt(cost));

  Matrix jac = jacobian(problem, p, options.fd_rel_step);
  Vector diag = jac.colwise().norm().transpose();
  for (Eigen::Index j = 0; j < n; ++j) {
    if (!(diag[j] > 0.0)) diag[j] = 1.0;
  }
  double lambda = options.initial_damping;

  auto finish = [&](bool converged, Termination why) {
    result.params = p;
    result.residual_norm = std::sqrt(cost);
    result.converged = converged;
    result.termination = why;
    result.covariance = estimate_covariance(jac, result.residual_norm);
    result.std_errors = Vector::Constant(n, std::numeric_limits<double>::infinity());
    if (result.covariance) {
      result.std_errors = result.covariance->diagonal().cwiseMax(0.0).cwiseSqrt();
    }
    return result;
  };

  if (cost == 0.0) return finish(true, Termination::ZeroResidual);

  Matrix augmented(m + n, n);
  Vector rhs = Vector::Zero(m + n);

  while (result.iterations < options.max_iterations) {
    if (scaled_gradient_norm(jac, r) <= options.gradient_tolerance) {
      return finish(true, Termination::GradientTolerance);
    }

    augmented.topRows(m) = jac;
    augmented.bottomRows(n) = (std::sqrt(lambda) * diag).asDiagonal();
    rhs.head(m) = -r;
    rhs.tail(n).setZero();
    const Vector step = augmented.householderQr().solve(rhs);

    const Vector trial = problem.project(p + step);
    const Vector taken = trial - p;
    const double step_norm = diag.cwiseProduct(taken).norm();
    const double param_norm = diag.cwiseProduct(p).norm();
    const bool tiny_step =
        step_norm <= options.step_tolerance * (param_norm + options.step_tolerance);
    ++result.iterations;

    Vector r_trial = eval_residuals(problem, trial);
    const bool usable = r_trial.size() == m && all_finite(r_trial);
    const double trial_cost = usable ? r_trial.squaredNorm() : 0.0;

    if (usable && trial_cost < cost) {
      p = trial;
      r = std::move(r_trial);
      cost = trial_cost;
      result.accepted_norms.push_back(std::sqrt(cost));
      lambda = std::max(lambda / 10.0, 1e-15);
      jac = jacobian(problem, p, options.fd_rel_step);
      diag = diag.cwiseMax(jac.colwise().norm().transpose());
      if (cost == 0.0) return finish(true, Termination::ZeroResidual);
      if (tiny_step) return finish(true, Termination::StepTolerance);
    } else {
      lambda *= 10.0;
      if (tiny_step) return finish(true, Termination::StepTolerance);
    }
  }
  return finish(false, Termination::MaxIterations);
}

std::vector<double> inverse_variance_weights(const std::vector<double>& sigmas) {
  std::vector<double> positive;
  for (double s : sigmas) {
    if (s > 0.0) positive.push_back(1.0 / (s * s));
  }
  double fallback = 1.0;
  if (!positive.empty()) {
    std::sort(positive.begin(), positive.end());
    const std::size_t n = positive.size();
    fallback = n % 2 == 1 ? positive[n / 2] : 0.5 * (positive[n / 2 - 1] + positive[n / 2]);
  }
  std::vector<double> w;
  w.reserve(sigmas.size());
  for (double s : sigmas) w.push_back(s > 0.0 ? 1.0 / (s * s) : fallback);
  return w;
}

}  // namespace sicmag::numfit
