#include "acss/model.hpp"

#include <cmath>
#include <stdexcept>

namespace acss {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kBoundaryEps = 1e-12;

// Parameter-only quantities hoisted out of the per-observation loop.
struct MixtureParams {
  double pi1, pi2, mu1, s1, mu2, s2;
  double inv_s1, inv_s2, log_s1, log_s2;

  explicit MixtureParams(const Vector& theta)
      : pi1(theta[0]),
        pi2(1.0 - theta[0]),
        mu1(theta[1]),
        s1(theta[2]),
        mu2(theta[3]),
        s2(theta[4]),
        inv_s1(1.0 / theta[2]),
        inv_s2(1.0 / theta[4]),
        log_s1(std::log(theta[2])),
        log_s2(std::log(theta[4])) {}
};

// Per-observation mixture terms, all scaled by phi_j(x_i)/a_i so that the
// accumulation is stable even when one component dominates.
struct MixturePoint {
  double log_a;        // log(pi1 phi1 + pi2 phi2)
  double t1, t2;       // phi_j / a
  double z1, z2;       // standardized residuals
};

MixturePoint mixture_point(const MixtureParams& p, double xi) {
  const double z1 = (xi - p.mu1) * p.inv_s1;
  const double z2 = (xi - p.mu2) * p.inv_s2;
  const double lphi1 = -0.5 * (z1 * z1 + kLog2Pi) - p.log_s1;
  const double lphi2 = -0.5 * (z2 * z2 + kLog2Pi) - p.log_s2;
  // a / phi_max written as a two-term sum keeps everything in [pi_min, 1].
  MixturePoint out;
  out.z1 = z1;
  out.z2 = z2;
  if (lphi2 <= lphi1) {
    const double e = std::exp(lphi2 - lphi1);
    const double denom = p.pi1 + p.pi2 * e;
    out.t1 = 1.0 / denom;
    out.t2 = e / denom;
    out.log_a = lphi1 + std::log(denom);
  } else {
    const double e = std::exp(lphi1 - lphi2);
    const double denom = p.pi1 * e + p.pi2;
    out.t1 = e / denom;
    out.t2 = 1.0 / denom;
    out.log_a = lphi2 + std::log(denom);
  }
  return out;
}

// value/gradient/Hessian contribution of one observation to the mixture loss
// -sum_i log a_i. Gradient is -ga with ga = (grad a)/a; Hessian of -log a is
// ga ga' - ha with ha = (hess a)/a.
void mixture_obs_terms(const MixtureParams& p, double xi, double& loga,
                       Eigen::Ref<Vector> grad, Matrix* hess) {
  const MixturePoint pt = mixture_point(p, xi);
  loga = pt.log_a;

  const double d1m = pt.z1 * p.inv_s1;                       // phi1' wrt mu1, / phi1
  const double d1s = (pt.z1 * pt.z1 - 1.0) * p.inv_s1;       // phi1' wrt sd1, / phi1
  const double d2m = pt.z2 * p.inv_s2;
  const double d2s = (pt.z2 * pt.z2 - 1.0) * p.inv_s2;

  Vector ga(5);
  ga[0] = pt.t1 - pt.t2;
  ga[1] = p.pi1 * pt.t1 * d1m;
  ga[2] = p.pi1 * pt.t1 * d1s;
  ga[3] = p.pi2 * pt.t2 * d2m;
  ga[4] = p.pi2 * pt.t2 * d2s;
  grad = -ga;
  if (!hess) return;

  // Second derivatives of phi(x; mu, sd) divided by phi:
  //   d2/dmu2   = (z^2 - 1) / sd^2
  //   d2/dmu dsd = z (z^2 - 3) / sd^2
  //   d2/dsd2   = (z^4 - 5 z^2 + 2) / sd^2
  const double inv_s1sq = p.inv_s1 * p.inv_s1;
  const double inv_s2sq = p.inv_s2 * p.inv_s2;
  const double z1sq = pt.z1 * pt.z1;
  const double z2sq = pt.z2 * pt.z2;
  const double h1mm = (z1sq - 1.0) * inv_s1sq;
  const double h1ms = pt.z1 * (z1sq - 3.0) * inv_s1sq;
  const double h1ss = (z1sq * z1sq - 5.0 * z1sq + 2.0) * inv_s1sq;
  const double h2mm = (z2sq - 1.0) * inv_s2sq;
  const double h2ms = pt.z2 * (z2sq - 3.0) * inv_s2sq;
  const double h2ss = (z2sq * z2sq - 5.0 * z2sq + 2.0) * inv_s2sq;

  Matrix ha = Matrix::Zero(5, 5);
  ha(0, 1) = ha(1, 0) = pt.t1 * d1m;
  ha(0, 2) = ha(2, 0) = pt.t1 * d1s;
  ha(0, 3) = ha(3, 0) = -pt.t2 * d2m;
  ha(0, 4) = ha(4, 0) = -pt.t2 * d2s;
  ha(1, 1) = p.pi1 * pt.t1 * h1mm;
  ha(1, 2) = ha(2, 1) = p.pi1 * pt.t1 * h1ms;
  ha(2, 2) = p.pi1 * pt.t1 * h1ss;
  ha(3, 3) = p.pi2 * pt.t2 * h2mm;
  ha(3, 4) = ha(4, 3) = p.pi2 * pt.t2 * h2ms;
  ha(4, 4) = p.pi2 * pt.t2 * h2ss;
  *hess = ga * ga.transpose() - ha;
}

}  // namespace

PerturbationVector draw_perturbation(int d, double sigma, Rng& rng) {
  if (d < 1) throw std::invalid_argument("draw_perturbation: d must be >= 1");
  if (!(sigma > 0)) throw std::invalid_argument("draw_perturbation: sigma must be > 0");
  Vector w(d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < d; ++i) w[i] = scale * rng.normal();
  return {std::move(w), sigma};
}

ModelSpec ModelSpec::gaussian_linear(Matrix z, double nu2, double ridge) {
  if (!(nu2 > 0)) throw std::invalid_argument("gaussian_linear: nu2 must be > 0");
  if (ridge < 0) throw std::invalid_argument("gaussian_linear: ridge must be >= 0");
  return ModelSpec(GaussianLinear{std::move(z), nu2, ridge});
}

ModelSpec ModelSpec::gaussian_mixture2() { return ModelSpec(GaussianMixture2{}); }

int ModelSpec::dim() const {
  if (is_gaussian_linear()) return static_cast<int>(linear().z.cols());
  return 5;
}

bool ModelSpec::in_domain(const Vector& theta) const {
  if (theta.size() != dim() || !theta.allFinite()) return false;
  if (is_gaussian_linear()) return true;
  const double pi1 = theta[0];
  if (pi1 <= kBoundaryEps || pi1 >= 1.0 - kBoundaryEps) return false;
  if (theta[2] <= kBoundaryEps || theta[4] <= kBoundaryEps) return false;
  return true;
}

Vector ModelSpec::regularizer_gradient(const Vector& theta) const {
  if (is_gaussian_linear()) return linear().ridge * theta;
  return Vector::Zero(theta.size());
}

double ModelSpec::log_density(const Vector& theta, const Vector& x) const {
  if (!in_domain(theta)) throw std::domain_error("log_density: theta outside parameter space");
  if (is_gaussian_linear()) {
    const auto& m = linear();
    const double n = static_cast<double>(x.size());
    const Vector resid = x - m.z * theta;
    return -0.5 * resid.squaredNorm() / m.nu2 - 0.5 * n * std::log(2.0 * M_PI * m.nu2);
  }
  const MixtureParams p(theta);
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i) s += mixture_point(p, x[i]).log_a;
  return s;
}

double ModelSpec::coord_log_density(const Vector& theta, int i, double xi) const {
  if (is_gaussian_linear()) {
    const auto& m = linear();
    const double mean = m.z.row(i).dot(theta);
    const double r = xi - mean;
    return -0.5 * r * r / m.nu2 - 0.5 * std::log(2.0 * M_PI * m.nu2);
  }
  (void)i;
  return mixture_point(MixtureParams(theta), xi).log_a;
}

double ModelSpec::sample_coord(const Vector& theta, int i, Rng& rng) const {
  if (is_gaussian_linear()) {
    const auto& m = linear();
    return m.z.row(i).dot(theta) + std::sqrt(m.nu2) * rng.normal();
  }
  (void)i;
  if (rng.uniform() < theta[0]) return theta[1] + theta[2] * rng.normal();
  return theta[3] + theta[4] * rng.normal();
}

Vector ModelSpec::simulate(const Vector& theta, int n, Rng& rng) const {
  if (!in_domain(theta)) throw std::domain_error("simulate: theta outside parameter space");
  if (is_gaussian_linear() && n != linear().z.rows())
    throw std::invalid_argument("simulate: n must equal rows(Z)");
  Vector x(n);
  for (int i = 0; i < n; ++i) x[i] = sample_coord(theta, i, rng);
  return x;
}

Vector ModelSpec::loss_gradient(const Vector& theta, const Vector& x) const {
  if (!in_domain(theta)) throw std::domain_error("loss_gradient: theta outside parameter space");
  if (is_gaussian_linear()) {
    const auto& m = linear();
    return m.z.transpose() * (m.z * theta - x) / m.nu2 + m.ridge * theta;
  }
  const MixtureParams p(theta);
  Vector grad = Vector::Zero(5);
  Vector gi(5);
  double loga = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    mixture_obs_terms(p, x[i], loga, gi, nullptr);
    grad += gi;
  }
  return grad;
}

LossEvaluation ModelSpec::loss(const Vector& theta, const Vector& x) const {
  if (!in_domain(theta)) throw std::domain_error("loss: theta outside parameter space");
  LossEvaluation out;
  if (is_gaussian_linear()) {
    const auto& m = linear();
    const int d = dim();
    const double n = static_cast<double>(x.size());
    const Vector resid = x - m.z * theta;
    out.value = 0.5 * resid.squaredNorm() / m.nu2 + 0.5 * n * std::log(2.0 * M_PI * m.nu2) +
                0.5 * m.ridge * theta.squaredNorm();
    out.gradient = -m.z.transpose() * resid / m.nu2 + m.ridge * theta;
    out.hessian = m.z.transpose() * m.z / m.nu2 + m.ridge * Matrix::Identity(d, d);
    return out;
  }

  const MixtureParams p(theta);
  out.value = 0.0;
  out.gradient = Vector::Zero(5);
  out.hessian = Matrix::Zero(5, 5);
  Vector gi(5);
  Matrix hi(5, 5);
  double loga = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    mixture_obs_terms(p, x[i], loga, gi, &hi);
    out.value -= loga;
    out.gradient += gi;
    out.hessian += hi;
  }
  return out;
}

LossEvaluation ModelSpec::coord_loss(const Vector& theta, int i, double xi) const {
  if (!in_domain(theta)) throw std::domain_error("coord_loss: theta outside parameter space");
  LossEvaluation out;
  if (is_gaussian_linear()) {
    const auto& m = linear();
    const double r = xi - m.z.row(i).dot(theta);
    out.value = 0.5 * r * r / m.nu2 + 0.5 * std::log(2.0 * M_PI * m.nu2);
    out.gradient = -m.z.row(i).transpose() * (r / m.nu2);
    out.hessian = m.z.row(i).transpose() * m.z.row(i) / m.nu2;
    return out;
  }
  const MixtureParams p(theta);
  out.gradient = Vector(5);
  out.hessian = Matrix(5, 5);
  double loga = 0.0;
  mixture_obs_terms(p, xi, loga, out.gradient, &out.hessian);
  out.value = -loga;
  return out;
}

LossEvaluation ModelSpec::loss(const Vector& theta, const Vector& x,
                               const PerturbationVector& w) const {
  LossEvaluation out = loss(theta, x);
  out.value += w.sigma * w.values.dot(theta);
  out.gradient += w.sigma * w.values;
  return out;
}

}  // namespace acss
