#pragma once

#include <variant>

#include "acss/rng.hpp"
#include "acss/types.hpp"

namespace acss {

// Value, gradient and Hessian of the loss at a parameter vector.
struct LossEvaluation {
  double value = 0.0;
  Vector gradient;
  Matrix hessian;
};

// Gaussian perturbation W ~ N(0, (1/d) I_d) together with its scale sigma.
struct PerturbationVector {
  Vector values;
  double sigma = 1.0;
};

PerturbationVector draw_perturbation(int d, double sigma, Rng& rng);

// X ~ N(Z theta, nu2 I_n), optional ridge regularizer R(theta) = ridge/2 |theta|^2.
struct GaussianLinear {
  Matrix z;
  double nu2 = 1.0;
  double ridge = 0.0;
};

// Two-component univariate Gaussian mixture over n i.i.d. observations,
// theta = (pi1, mu1, sd1, mu2, sd2), parameter dimension d = 5.
struct GaussianMixture2 {};

class ModelSpec {
 public:
  static ModelSpec gaussian_linear(Matrix z, double nu2, double ridge = 0.0);
  static ModelSpec gaussian_mixture2();

  int dim() const;
  bool is_gaussian_linear() const { return std::holds_alternative<GaussianLinear>(family_); }
  const GaussianLinear& linear() const { return std::get<GaussianLinear>(family_); }

  // Open parameter space membership; mixture rejects points within 1e-12 of
  // the boundary (sd_j <= 0, pi1 in {0,1}).
  bool in_domain(const Vector& theta) const;

  // L(theta; x) = -log f(x; theta) + R(theta), including normalizing constants.
  LossEvaluation loss(const Vector& theta, const Vector& x) const;
  // L(theta; x, w) = L(theta; x) + sigma w' theta
  LossEvaluation loss(const Vector& theta, const Vector& x, const PerturbationVector& w) const;
  // Gradient only (skips the Hessian).
  Vector loss_gradient(const Vector& theta, const Vector& x) const;
  // Contribution of observation i to the loss, regularizer excluded:
  // loss(theta, x) = sum_i coord_loss(theta, i, x_i).{value,...} + R(theta).
  LossEvaluation coord_loss(const Vector& theta, int i, double xi) const;

  double log_density(const Vector& theta, const Vector& x) const;
  // Both families factorize across observations given theta.
  double coord_log_density(const Vector& theta, int i, double xi) const;
  double sample_coord(const Vector& theta, int i, Rng& rng) const;

  // One draw X ~ P_theta with n observations (gaussian_linear requires n == rows(Z)).
  Vector simulate(const Vector& theta, int n, Rng& rng) const;

  Vector regularizer_gradient(const Vector& theta) const;

 private:
  explicit ModelSpec(std::variant<GaussianLinear, GaussianMixture2> f) : family_(std::move(f)) {}
  std::variant<GaussianLinear, GaussianMixture2> family_;
};

}  // namespace acss
