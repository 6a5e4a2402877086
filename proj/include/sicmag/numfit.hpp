#pragma once

// Levenberg-Marquardt nonlinear least squares with box bounds.
//
// Every fitting routine in the toolkit goes through levenberg_marquardt().
// Problems supply a residual function and, optionally, an analytic Jacobian;
// without one a central-difference Jacobian is used.

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace sicmag::numfit {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ResidualFn = std::function<Vector(const Vector&)>;
using JacobianFn = std::function<Matrix(const Vector&)>;

struct ResidualProblem {
  Eigen::Index param_count = 0;
  ResidualFn residuals;
  std::optional<Vector> lower_bounds;
  std::optional<Vector> upper_bounds;
  JacobianFn analytic_jacobian;  // rows = residuals, columns = parameters

  // Throws InvalidInput on inconsistent bounds or a missing residual function.
  void validate() const;
  bool within_bounds(const Vector& params) const;
  Vector project(Vector params) const;
};

enum class Termination {
  StepTolerance,
  GradientTolerance,
  ZeroResidual,
  MaxIterations,
};

std::string_view to_string(Termination t) noexcept;

struct FitResult {
  Vector params;
  // +inf when the covariance is unavailable (singular JᵀJ or m <= n).
  Vector std_errors;
  double residual_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  Termination termination = Termination::MaxIterations;
  std::optional<Matrix> covariance;
  // Residual norm at init followed by the norm after every accepted step.
  std::vector<double> accepted_norms;

  double chi2() const { return residual_norm * residual_norm; }
};

struct LmOptions {
  double step_tolerance = 1e-8;
  // Applied to the scaled gradient max_j |J_jᵀr| / (|J_j| |r|).
  double gradient_tolerance = 1e-8;
  int max_iterations = 200;
  double initial_damping = 1e-3;
  double fd_rel_step = 1e-6;
};

FitResult levenberg_marquardt(const ResidualProblem& problem, const Vector& init,
                              const LmOptions& options = {});

// Central differences with step rel_step * |p_j| (rel_step when p_j == 0).
// Near a bound the stencil switches to a one-sided second-order formula.
Matrix finite_difference_jacobian(const ResidualProblem& problem, const Vector& params,
                                  double rel_step = 1e-6);

// Analytic Jacobian when the problem has one, finite differences otherwise.
Matrix jacobian(const ResidualProblem& problem, const Vector& params, double rel_step = 1e-6);

// Covariance sigma²(JᵀJ)⁻¹ with sigma² = |r|²/(m - n); nullopt when singular.
std::optional<Matrix> estimate_covariance(const Matrix& jac, double residual_norm);

// Weights 1/sigma²; zero sigmas take the median of the positive weights.
std::vector<double> inverse_variance_weights(const std::vector<double>& sigmas);

}  // namespace sicmag::numfit
