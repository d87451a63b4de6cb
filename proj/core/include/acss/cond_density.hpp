#pragma once

#include "acss/solvers.hpp"

namespace acss {

// Everything the plug-in conditional density is conditioned on: the certified
// fit (theta_hat, g_hat, active set or support) plus the solver configuration
// used to produce it, which the membership indicator must re-run verbatim.
struct ConditioningState {
  EstimationProblem problem;
  Vector theta_hat;
  Vector g_hat;
  std::vector<int> active_or_support;
  Matrix u;  // orthocomplement basis of the active rows (constrained mode)

  const ModelSpec& model() const { return problem.model; }
  double sigma() const { return problem.sigma; }
  bool penalized() const { return problem.lambda_l1.has_value(); }
};

ConditioningState make_state(const EstimationProblem& problem, const SsospCertificate& cert);

// log p(x | theta_hat, g_hat) up to the x-independent normalization,
// decomposed into its three additive terms. indicator=false encodes log -inf.
struct LogDensityValue {
  double log_value = 0.0;
  double log_f = 0.0;
  double gauss_exponent = 0.0;
  double log_det = 0.0;
  bool indicator = true;
};

// check_membership additionally runs the refit indicator (skipped for the
// gaussian_linear family, where membership holds almost surely).
LogDensityValue log_unnorm_density(const ConditioningState& state, const Vector& x,
                                   bool check_membership);

// Refit at (x, w*) with w* = (g_hat - grad L(theta_hat; x)) / sigma and require
// an SSOSP landing back on theta_hat with the same active set / support.
bool membership_check(const ConditioningState& state, const Vector& x);

// log p(x_new) - log p(x_old); -inf iff x_new fails its indicator. x_old is
// assumed to already satisfy the indicator (true along any chain started at X).
double log_density_ratio(const ConditioningState& state, const Vector& x_new,
                         const Vector& x_old, bool check_membership);

}  // namespace acss
