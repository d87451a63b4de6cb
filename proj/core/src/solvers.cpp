#include "acss/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace acss {

namespace {

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

// Nullspace basis of the rows indexed by the working set.
Matrix working_nullspace(const ConstraintSet& cs, const std::vector<int>& w) {
  const int d = cs.dim();
  if (w.empty()) return Matrix::Identity(d, d);
  Matrix aw(static_cast<int>(w.size()), d);
  for (size_t k = 0; k < w.size(); ++k) aw.row(k) = cs.a.row(w[k]);
  Eigen::JacobiSVD<Matrix> svd(aw, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double thresh = sv.size() > 0 ? 1e-10 * sv[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  return svd.matrixV().rightCols(d - rank);
}

// Phase-1 heuristic: descend on 1/2 |(A theta - b)_+|^2 from the given start.
bool seek_feasible(const ConstraintSet& cs, Vector& theta, double tol) {
  if (cs.feasible(theta, tol)) return true;
  const double lip = cs.a.squaredNorm();  // crude Lipschitz bound for the gradient
  if (lip <= 0) return false;
  const double step = 1.0 / lip;
  for (int it = 0; it < 500; ++it) {
    const Vector viol = (cs.a * theta - cs.b).cwiseMax(0.0);
    if ((viol.array() <= tol).all()) return true;
    theta -= step * (cs.a.transpose() * viol);
  }
  return cs.feasible(theta, tol);
}

struct MixtureObjective {
  const ModelSpec& model;
  const Vector& x;
  const PerturbationVector& w;

  double value(const Vector& theta) const {
    return -model.log_density(theta, x) + w.sigma * w.values.dot(theta);
  }
  Vector gradient(const Vector& theta) const {
    return model.loss_gradient(theta, x) + w.sigma * w.values;
  }
};

Vector mixture_project(Vector theta, double lower_sd, double pi_clip) {
  theta[0] = std::clamp(theta[0], pi_clip, 1.0 - pi_clip);
  theta[2] = std::max(theta[2], lower_sd);
  theta[4] = std::max(theta[4], lower_sd);
  return theta;
}

}  // namespace

EstimationProblem EstimationProblem::constrained(ModelSpec model, ConstraintSet cs, double sigma,
                                                 SolverKind solver, SolverOptions opts) {
  if (!(sigma > 0)) throw std::invalid_argument("EstimationProblem: sigma must be > 0");
  EstimationProblem p{std::move(model), std::move(cs), std::nullopt, sigma, solver,
                      std::move(opts), {}};
  return p;
}

EstimationProblem EstimationProblem::l1_penalized(ModelSpec model, double lambda, double sigma,
                                                  SolverOptions opts) {
  if (!(lambda > 0)) throw std::invalid_argument("EstimationProblem: lambda must be > 0");
  if (!(sigma > 0)) throw std::invalid_argument("EstimationProblem: sigma must be > 0");
  EstimationProblem p{std::move(model), std::nullopt, lambda, sigma,
                      SolverKind::coordinate_descent, std::move(opts), {}};
  return p;
}

QpResult solve_activeset_qp(const Matrix& h, const Vector& c, const ConstraintSet& cs,
                            const SolverOptions& opts) {
  const int d = static_cast<int>(h.rows());
  Eigen::LLT<Matrix> llt(h);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("solve_activeset_qp: H is not positive definite");

  const double b_scale = cs.rows() > 0 ? cs.b.cwiseAbs().maxCoeff() : 0.0;
  const double tol_feas = 1e-10 * (1.0 + b_scale);
  const Vector theta_u = llt.solve(-c);

  Vector x;
  std::vector<int> work;
  if (cs.feasible(theta_u, tol_feas)) {
    x = theta_u;
  } else {
    // Anchor at a feasible point and ray-search toward the unconstrained
    // minimizer; the blocking constraints seed the working set.
    Vector anchor = Vector::Zero(d);
    if (!cs.feasible(anchor, tol_feas)) {
      anchor = theta_u;
      if (!seek_feasible(cs, anchor, tol_feas))
        throw std::runtime_error("solve_activeset_qp: no feasible point found");
    }
    const Vector dir = theta_u - anchor;
    double alpha = 1.0;
    for (int i = 0; i < cs.rows(); ++i) {
      const double ad = cs.a.row(i).dot(dir);
      if (ad > 1e-14) alpha = std::min(alpha, (cs.b[i] - cs.a.row(i).dot(anchor)) / ad);
    }
    alpha = std::max(alpha, 0.0);
    x = anchor + alpha * dir;
    for (int i = 0; i < cs.rows(); ++i)
      if (cs.b[i] - cs.a.row(i).dot(x) <= 1e-9) work.push_back(i);
  }

  QpResult out;
  out.multipliers = Vector::Zero(cs.rows());
  const int max_iter = std::max(opts.max_iter, 10 * (d + cs.rows() + 1));
  for (out.iterations = 0; out.iterations < max_iter; ++out.iterations) {
    const Vector g = h * x + c;
    const Matrix nsp = working_nullspace(cs, work);

    Vector p = Vector::Zero(d);
    if (nsp.cols() > 0) {
      const Matrix hr = nsp.transpose() * h * nsp;
      p = nsp * hr.llt().solve(Vector(-nsp.transpose() * g));
    }

    if (p.norm() <= 1e-11 * (1.0 + x.norm())) {
      Matrix awt(d, work.size());
      for (size_t k = 0; k < work.size(); ++k) awt.col(k) = cs.a.row(work[k]).transpose();
      // NNLS witness first: duplicated rows can make least squares ambiguous.
      const Vector lam_nn = nnls(awt, -g);
      if ((g + awt * lam_nn).norm() <= 1e-9 * (1.0 + g.norm())) {
        out.multipliers.setZero();
        for (size_t k = 0; k < work.size(); ++k) out.multipliers[work[k]] = lam_nn[k];
        out.theta = x;
        return out;
      }
      const Vector lam_ls = awt.colPivHouseholderQr().solve(-g);
      int drop = 0;
      lam_ls.minCoeff(&drop);
      work.erase(work.begin() + drop);
      continue;
    }

    double alpha = 1.0;
    int blocking = -1;
    for (int i = 0; i < cs.rows(); ++i) {
      if (std::find(work.begin(), work.end(), i) != work.end()) continue;
      const double ap = cs.a.row(i).dot(p);
      if (ap > 1e-14) {
        const double cand = (cs.b[i] - cs.a.row(i).dot(x)) / ap;
        if (cand < alpha) {
          alpha = cand;
          blocking = i;
        }
      }
    }
    x += std::max(alpha, 0.0) * p;
    if (blocking >= 0) work.push_back(blocking);
  }
  throw std::runtime_error("solve_activeset_qp: iteration limit exceeded");
}

Vector solve_pava(const Vector& y) {
  const int n = static_cast<int>(y.size());
  std::vector<double> means;
  std::vector<int> counts;
  means.reserve(n);
  counts.reserve(n);
  for (int i = 0; i < n; ++i) {
    means.push_back(y[i]);
    counts.push_back(1);
    while (means.size() >= 2 && means[means.size() - 2] >= means.back()) {
      const double m = (means[means.size() - 2] * counts[counts.size() - 2] +
                        means.back() * counts.back()) /
                       (counts[counts.size() - 2] + counts.back());
      counts[counts.size() - 2] += counts.back();
      means[means.size() - 2] = m;
      means.pop_back();
      counts.pop_back();
    }
  }
  Vector out(n);
  int pos = 0;
  for (size_t b = 0; b < means.size(); ++b)
    for (int k = 0; k < counts[b]; ++k) out[pos++] = means[b];
  return out;
}

CdResult solve_elastic_net_cd(const Matrix& z, const Vector& x, double nu2, double lambda_ridge,
                              double lambda_l1, const Vector& sigma_w, const SolverOptions& opts,
                              const Vector* warm_start) {
  if (!(nu2 > 0)) throw std::invalid_argument("solve_elastic_net_cd: nu2 must be > 0");
  if (lambda_ridge < 0 || !(lambda_l1 > 0))
    throw std::invalid_argument("solve_elastic_net_cd: bad penalties");
  const int d = static_cast<int>(z.cols());

  CdResult out;
  out.theta = warm_start ? *warm_start : Vector::Zero(d);
  Vector colnorm(d);
  for (int j = 0; j < d; ++j) colnorm[j] = z.col(j).squaredNorm() / nu2 + lambda_ridge;
  Vector resid = x - z * out.theta;

  for (out.sweeps = 0; out.sweeps < opts.max_iter; ++out.sweeps) {
    double max_delta = 0.0;
    for (int j = 0; j < d; ++j) {
      if (colnorm[j] <= 0) continue;
      const double old = out.theta[j];
      // rho_j = z_j'(resid + z_j theta_j)/nu2 - sigma w_j
      const double rho_j = z.col(j).dot(resid) / nu2 + (colnorm[j] - lambda_ridge) * old -
                           sigma_w[j];
      const double next = soft_threshold(rho_j, lambda_l1) / colnorm[j];
      if (next != old) {
        resid += z.col(j) * (old - next);
        out.theta[j] = next;
        max_delta = std::max(max_delta, std::abs(next - old));
      }
    }
    if (max_delta <= opts.tol) {
      out.converged = true;
      ++out.sweeps;
      break;
    }
  }
  return out;
}

ConstraintSet mixture_sd_constraints(double lower_sd) {
  Matrix a = Matrix::Zero(2, 5);
  a(0, 2) = -1.0;
  a(1, 4) = -1.0;
  return {std::move(a), Vector::Constant(2, -lower_sd)};
}

Vector mixture_em_init(const Vector& x, double lower_sd, int iterations) {
  const int n = static_cast<int>(x.size());
  const double mean = x.mean();
  const double sd = std::sqrt((x.array() - mean).square().sum() / std::max(n - 1, 1));
  double c1 = mean + (sd > 0 ? sd : 0.5);
  double c2 = mean - (sd > 0 ? sd : 0.5);

  // 2-means on the line to seed the moments.
  for (int it = 0; it < 10; ++it) {
    double s1 = 0, s2 = 0;
    int n1 = 0, n2 = 0;
    for (int i = 0; i < n; ++i) {
      if (std::abs(x[i] - c1) <= std::abs(x[i] - c2)) {
        s1 += x[i];
        ++n1;
      } else {
        s2 += x[i];
        ++n2;
      }
    }
    if (n1 > 0) c1 = s1 / n1;
    if (n2 > 0) c2 = s2 / n2;
  }

  double pi1 = 0.5, mu1 = std::max(c1, c2), mu2 = std::min(c1, c2);
  double v1 = 0, v2 = 0;
  int n1 = 0, n2 = 0;
  for (int i = 0; i < n; ++i) {
    if (std::abs(x[i] - mu1) <= std::abs(x[i] - mu2)) {
      v1 += (x[i] - mu1) * (x[i] - mu1);
      ++n1;
    } else {
      v2 += (x[i] - mu2) * (x[i] - mu2);
      ++n2;
    }
  }
  pi1 = n > 0 ? std::clamp(static_cast<double>(n1) / n, 0.05, 0.95) : 0.5;
  double sd1 = std::max(n1 > 1 ? std::sqrt(v1 / n1) : lower_sd, lower_sd);
  double sd2 = std::max(n2 > 1 ? std::sqrt(v2 / n2) : lower_sd, lower_sd);

  // EM refinement with the sd floor applied at every step.
  std::vector<double> r(n);
  for (int it = 0; it < iterations; ++it) {
    double r_sum = 0, m1 = 0, m2 = 0, w2sum = 0;
    const double c1 = std::log(pi1) - std::log(sd1);
    const double c2 = std::log1p(-pi1) - std::log(sd2);
    for (int i = 0; i < n; ++i) {
      const double z1 = (x[i] - mu1) / sd1;
      const double z2 = (x[i] - mu2) / sd2;
      const double delta = (c2 - 0.5 * z2 * z2) - (c1 - 0.5 * z1 * z1);
      r[i] = 1.0 / (1.0 + std::exp(std::min(delta, 700.0)));
      r_sum += r[i];
      m1 += r[i] * x[i];
      m2 += (1.0 - r[i]) * x[i];
      w2sum += 1.0 - r[i];
    }
    if (r_sum < 1e-9 || w2sum < 1e-9) break;
    pi1 = std::clamp(r_sum / n, 1e-3, 1.0 - 1e-3);
    mu1 = m1 / r_sum;
    mu2 = m2 / w2sum;
    double s1 = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      s1 += r[i] * (x[i] - mu1) * (x[i] - mu1);
      s2 += (1.0 - r[i]) * (x[i] - mu2) * (x[i] - mu2);
    }
    sd1 = std::max(std::sqrt(s1 / r_sum), lower_sd);
    sd2 = std::max(std::sqrt(s2 / w2sum), lower_sd);
  }

  if (mu1 < mu2) {
    std::swap(mu1, mu2);
    std::swap(sd1, sd2);
    pi1 = 1.0 - pi1;
  }
  Vector theta(5);
  theta << pi1, mu1, sd1, mu2, sd2;
  return theta;
}

FitResult fit_mixture_constrained(const Vector& x, const PerturbationVector& w, double lower_sd,
                                  const Vector& init, const SolverOptions& opts,
                                  const Tolerances& tol) {
  if (!(lower_sd > 0)) throw std::invalid_argument("fit_mixture_constrained: lower_sd must be > 0");
  const ModelSpec model = ModelSpec::gaussian_mixture2();
  const ConstraintSet cs = mixture_sd_constraints(lower_sd);
  if (!model.in_domain(init) || !cs.feasible(init, 0.0))
    throw std::invalid_argument("fit_mixture_constrained: infeasible init");

  const MixtureObjective obj{model, x, w};
  auto project = [&](const Vector& t) { return mixture_project(t, lower_sd, opts.pi_clip); };
  auto eval_full = [&](const Vector& t) {
    LossEvaluation e = model.loss(t, x);
    e.value += w.sigma * w.values.dot(t);
    e.gradient += w.sigma * w.values;
    return e;
  };

  Vector theta = project(init);
  LossEvaluation cur = eval_full(theta);
  double step = 1.0 / (1.0 + cur.gradient.norm());
  Vector theta_prev = theta, grad_prev = cur.gradient;

  FitResult out;
  bool converged = false;
  int it = 0;
  for (; it < opts.max_iter; ++it) {
    const double pg_norm = (theta - project(theta - cur.gradient)).norm();
    if (pg_norm <= 0.5 * tol.tol_kkt_rel * (1.0 + cur.gradient.norm())) {
      converged = true;
      break;
    }

    // Projected Newton step when the Hessian cooperates, BB/backtracking
    // gradient step otherwise.
    Vector cand;
    double cand_value = std::numeric_limits<double>::infinity();
    bool moved = false;
    Eigen::LLT<Matrix> llt(cur.hessian);
    if (llt.info() == Eigen::Success) {
      const Vector p = llt.solve(cur.gradient);
      if (p.norm() <= 1e-5 * (1.0 + theta.norm())) {
        // Local quadratic regime: the objective can plateau in double
        // precision before the gradient meets the KKT tolerance, so take the
        // full step without demanding a measurable decrease.
        cand = project(theta - p);
        cand_value = obj.value(cand);
        moved = true;
      }
      double a = 1.0;
      for (int ls = 0; ls < 4 && !moved; ++ls, a *= 0.5) {
        cand = project(theta - a * p);
        cand_value = obj.value(cand);
        if (cand_value < cur.value) moved = true;
      }
    }
    if (!moved) {
      if (it > 0) {
        const Vector s = theta - theta_prev;
        const Vector y = cur.gradient - grad_prev;
        const double yy = y.squaredNorm();
        if (yy > 0) step = std::clamp(std::abs(s.dot(y)) / yy, 1e-8, 1e2);
      }
      double t = step;
      cand = project(theta - t * cur.gradient);
      cand_value = obj.value(cand);
      while (cand_value > cur.value - 1e-4 * cur.gradient.dot(theta - cand) && t > 1e-13) {
        t *= 0.5;
        cand = project(theta - t * cur.gradient);
        cand_value = obj.value(cand);
      }
    }
    if ((cand - theta).norm() <= 1e-15 * (1.0 + theta.norm())) {
      converged = true;  // no movement possible; certificate decides
      break;
    }
    theta_prev = theta;
    grad_prev = cur.gradient;
    theta = cand;
    cur = eval_full(theta);
  }
  const double value = cur.value;

  out.certificate = check_ssosp_constrained(model, cs, theta, x, w, tol);
  out.iterations = it;
  out.objective = value;
  out.converged = converged && out.certificate.kkt_ok;
  return out;
}

FitResult fit(const EstimationProblem& problem, const Vector& x, const PerturbationVector& w) {
  const ModelSpec& model = problem.model;
  const double sigma = problem.sigma;
  PerturbationVector pw{w.values, sigma};

  switch (problem.solver) {
    case SolverKind::activeset_qp: {
      if (!model.is_gaussian_linear() || !problem.constraints)
        throw std::invalid_argument("fit: activeset_qp requires a constrained gaussian_linear problem");
      const auto& gl = model.linear();
      const int d = model.dim();
      const Matrix h =
          gl.z.transpose() * gl.z / gl.nu2 + gl.ridge * Matrix::Identity(d, d);
      const Vector c = -gl.z.transpose() * x / gl.nu2 + sigma * w.values;
      const QpResult qp = solve_activeset_qp(h, c, *problem.constraints, problem.options);
      FitResult out;
      out.certificate = check_ssosp_constrained(model, *problem.constraints, qp.theta, x, pw,
                                                problem.tolerances);
      out.iterations = qp.iterations;
      out.objective = model.loss(qp.theta, x, pw).value;
      out.converged = out.certificate.kkt_ok;
      return out;
    }
    case SolverKind::pava: {
      if (!model.is_gaussian_linear() || !problem.constraints)
        throw std::invalid_argument("fit: pava requires the constrained gaussian_linear problem");
      const auto& gl = model.linear();
      // Monotone projection of x - sigma nu^2 w (Z = I).
      const Vector theta = solve_pava(x - sigma * gl.nu2 * w.values);
      FitResult out;
      out.certificate = check_ssosp_constrained(model, *problem.constraints, theta, x, pw,
                                                problem.tolerances);
      out.iterations = 1;
      out.objective = model.loss(theta, x, pw).value;
      out.converged = out.certificate.kkt_ok;
      return out;
    }
    case SolverKind::coordinate_descent: {
      if (!model.is_gaussian_linear() || !problem.lambda_l1)
        throw std::invalid_argument("fit: coordinate_descent requires an l1-penalized gaussian_linear problem");
      const auto& gl = model.linear();
      const CdResult cd = solve_elastic_net_cd(gl.z, x, gl.nu2, gl.ridge, *problem.lambda_l1,
                                               Vector(sigma * w.values), problem.options);
      FitResult out;
      out.certificate =
          check_ssosp_penalized(model, *problem.lambda_l1, cd.theta, x, pw, problem.tolerances);
      out.iterations = cd.sweeps;
      out.objective = model.loss(cd.theta, x, pw).value + *problem.lambda_l1 * cd.theta.lpNorm<1>();
      out.converged = cd.converged && out.certificate.kkt_ok;
      return out;
    }
    case SolverKind::projected_gradient: {
      if (model.is_gaussian_linear() || !problem.constraints)
        throw std::invalid_argument("fit: projected_gradient is the mixture solver");
      const double lower_sd = -problem.constraints->b[0];
      const Vector init = mixture_em_init(x, lower_sd, problem.options.em_iterations);
      return fit_mixture_constrained(x, pw, lower_sd, init, problem.options, problem.tolerances);
    }
  }
  throw std::invalid_argument("fit: unknown solver");
}

}  // namespace acss
