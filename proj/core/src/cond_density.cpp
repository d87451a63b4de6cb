#include "acss/cond_density.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace acss {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log det of a symmetric matrix via Cholesky; nullopt iff not PD.
std::optional<double> log_det_pd(const Matrix& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return std::nullopt;
  double s = 0.0;
  for (int i = 0; i < m.rows(); ++i) s += std::log(llt.matrixL()(i, i));
  return 2.0 * s;
}

}  // namespace

ConditioningState make_state(const EstimationProblem& problem, const SsospCertificate& cert) {
  if (!cert.passes()) throw std::invalid_argument("make_state: certificate does not pass");
  ConditioningState st{problem, cert.theta_hat, cert.g_hat, cert.active_or_support, Matrix()};
  if (!st.penalized()) {
    if (!problem.constraints) throw std::invalid_argument("make_state: missing constraints");
    st.u = ortho_complement_basis(*problem.constraints, ActiveSet{cert.active_or_support}).u;
  }
  return st;
}

LogDensityValue log_unnorm_density(const ConditioningState& state, const Vector& x,
                                   bool check_membership) {
  const ModelSpec& model = state.model();
  const double d = static_cast<double>(model.dim());
  const double sigma = state.sigma();

  LogDensityValue out;
  out.log_f = model.log_density(state.theta_hat, x);

  if (model.is_gaussian_linear()) {
    // Hessian is data-independent and membership holds almost surely, so the
    // det term is an x-independent constant and the indicator is vacuous.
    const Vector grad = model.loss_gradient(state.theta_hat, x);
    out.gauss_exponent = -d / (2.0 * sigma * sigma) * (state.g_hat - grad).squaredNorm();
    out.log_det = 0.0;
    out.log_value = out.log_f + out.gauss_exponent;
    return out;
  }

  const LossEvaluation ev = model.loss(state.theta_hat, x);
  out.gauss_exponent = -d / (2.0 * sigma * sigma) * (state.g_hat - ev.gradient).squaredNorm();

  std::optional<double> ld;
  if (state.penalized()) {
    const int ns = static_cast<int>(state.active_or_support.size());
    Matrix hs(ns, ns);
    for (int a = 0; a < ns; ++a)
      for (int b = 0; b < ns; ++b)
        hs(a, b) = ev.hessian(state.active_or_support[a], state.active_or_support[b]);
    ld = log_det_pd(hs);
  } else {
    ld = log_det_pd(state.u.transpose() * ev.hessian * state.u);
  }
  if (!ld) {
    out.indicator = false;
    out.log_value = kNegInf;
    return out;
  }
  out.log_det = *ld;

  if (check_membership && !membership_check(state, x)) {
    out.indicator = false;
    out.log_value = kNegInf;
    return out;
  }
  out.log_value = out.log_f + out.gauss_exponent + out.log_det;
  return out;
}

bool membership_check(const ConditioningState& state, const Vector& x) {
  const ModelSpec& model = state.model();
  if (model.is_gaussian_linear()) return true;

  const double sigma = state.sigma();
  Vector wstar;
  try {
    wstar = (state.g_hat - model.loss_gradient(state.theta_hat, x)) / sigma;
  } catch (const std::exception&) {
    return false;
  }

  FitResult refit;
  try {
    refit = fit(state.problem, x, PerturbationVector{std::move(wstar), sigma});
  } catch (const std::exception&) {
    return false;
  }
  if (!refit.converged || !refit.certificate.passes()) return false;

  const double tol_member = 1e-6 * (1.0 + state.theta_hat.norm());
  if ((refit.certificate.theta_hat - state.theta_hat).norm() > tol_member) return false;
  return refit.certificate.active_or_support == state.active_or_support;
}

double log_density_ratio(const ConditioningState& state, const Vector& x_new,
                         const Vector& x_old, bool check_membership) {
  const LogDensityValue lnew = log_unnorm_density(state, x_new, check_membership);
  if (!lnew.indicator) return kNegInf;
  const LogDensityValue lold = log_unnorm_density(state, x_old, false);
  return lnew.log_value - lold.log_value;
}

}  // namespace acss
