#pragma once

#include <optional>

#include "acss/constraints.hpp"

namespace acss {

struct SolverOptions {
  int max_iter = 2000;
  double tol = 1e-10;      // step / coordinate-update tolerance
  int em_iterations = 20;  // mixture warm start
  double pi_clip = 1e-6;   // mixture weight kept inside [pi_clip, 1 - pi_clip]
};

enum class SolverKind { activeset_qp, pava, coordinate_descent, projected_gradient };

// A fully specified perturbed-MLE problem: model, regularization mode,
// perturbation scale, and the solver used to produce theta_hat. Refitting for
// the membership indicator must go through the identical configuration.
struct EstimationProblem {
  ModelSpec model;
  std::optional<ConstraintSet> constraints;  // constrained mode
  std::optional<double> lambda_l1;           // l1-penalized mode
  double sigma = 1.0;
  SolverKind solver = SolverKind::activeset_qp;
  SolverOptions options;
  Tolerances tolerances;

  static EstimationProblem constrained(ModelSpec model, ConstraintSet cs, double sigma,
                                       SolverKind solver, SolverOptions opts = {});
  static EstimationProblem l1_penalized(ModelSpec model, double lambda, double sigma,
                                        SolverOptions opts = {});
};

struct FitResult {
  SsospCertificate certificate;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;
};

// Solve for the perturbed (constrained or l1-penalized) MLE and certify it.
// Nonconvergence is reported through converged=false, not an exception.
FitResult fit(const EstimationProblem& problem, const Vector& x, const PerturbationVector& w);

struct QpResult {
  Vector theta;
  Vector multipliers;  // length r, nonnegative, supported on active constraints
  int iterations = 0;
};

// Primal active-set method for min 1/2 theta' H theta + c' theta s.t. A theta <= b.
QpResult solve_activeset_qp(const Matrix& h, const Vector& c, const ConstraintSet& cs,
                            const SolverOptions& opts = {});

// Isotonic least squares: argmin |theta - y|^2 s.t. theta nondecreasing.
Vector solve_pava(const Vector& y);

struct CdResult {
  Vector theta;
  int sweeps = 0;
  bool converged = false;
};

// Cyclic coordinate descent for
//   1/(2 nu2) |x - Z theta|^2 + lambda_ridge/2 |theta|^2 + lambda_l1 |theta|_1
//     + sigma w' theta.
CdResult solve_elastic_net_cd(const Matrix& z, const Vector& x, double nu2, double lambda_ridge,
                              double lambda_l1, const Vector& sigma_w,
                              const SolverOptions& opts = {}, const Vector* warm_start = nullptr);

// The two rows -sd_j <= -lower_sd for the mixture parameterization
// (pi1, mu1, sd1, mu2, sd2).
ConstraintSet mixture_sd_constraints(double lower_sd);

// Deterministic warm start: 2-means moment split followed by EM iterations.
Vector mixture_em_init(const Vector& x, double lower_sd, int iterations);

// Projected gradient descent with box projection sd_j <- max(sd_j, lower_sd).
FitResult fit_mixture_constrained(const Vector& x, const PerturbationVector& w, double lower_sd,
                                  const Vector& init, const SolverOptions& opts = {},
                                  const Tolerances& tol = {});

}  // namespace acss
