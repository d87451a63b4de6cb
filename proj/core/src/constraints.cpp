#include "acss/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace acss {

namespace {

constexpr double kRankTolRel = 1e-10;

Matrix active_rows(const ConstraintSet& cs, const ActiveSet& aset) {
  Matrix m(static_cast<int>(aset.indices.size()), cs.dim());
  for (int k = 0; k < m.rows(); ++k) m.row(k) = cs.a.row(aset.indices[k]);
  return m;
}

// Smallest eigenvalue of a symmetric matrix; 0x0 matrices are vacuously PD.
double min_eig(const Matrix& m) {
  if (m.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

}  // namespace

ConstraintSet builtin_constraints(ConstraintKind kind, int d, double param) {
  if (d < 1) throw std::invalid_argument("builtin_constraints: d must be >= 1");
  switch (kind) {
    case ConstraintKind::nonnegative:
      return {-Matrix::Identity(d, d), Vector::Zero(d)};
    case ConstraintKind::lower_bound:
      return {-Matrix::Identity(d, d), Vector::Constant(d, -param)};
    case ConstraintKind::monotone: {
      Matrix a = Matrix::Zero(d - 1, d);
      for (int i = 0; i + 1 < d; ++i) {
        a(i, i) = 1.0;
        a(i, i + 1) = -1.0;
      }
      return {std::move(a), Vector::Zero(d - 1)};
    }
    case ConstraintKind::linf_ball: {
      if (!(param > 0)) throw std::invalid_argument("linf_ball: C must be > 0");
      Matrix a(2 * d, d);
      a.topRows(d) = Matrix::Identity(d, d);
      a.bottomRows(d) = -Matrix::Identity(d, d);
      return {std::move(a), Vector::Constant(2 * d, param)};
    }
    case ConstraintKind::l1_ball: {
      if (!(param > 0)) throw std::invalid_argument("l1_ball: C must be > 0");
      if (d > 20)
        throw std::invalid_argument(
            "l1_ball: 2^d rows unsupported for d > 20; use the l1-penalized mode");
      const std::int64_t rows = std::int64_t{1} << d;
      Matrix a(rows, d);
      for (std::int64_t s = 0; s < rows; ++s)
        for (int j = 0; j < d; ++j) a(s, j) = (s >> j) & 1 ? 1.0 : -1.0;
      return {std::move(a), Vector::Constant(rows, param)};
    }
    case ConstraintKind::fused_l1: {
      if (!(param > 0)) throw std::invalid_argument("fused_l1: C must be > 0");
      if (d > 20)
        throw std::invalid_argument("fused_l1: 2^(d-1) rows unsupported for d > 20");
      Matrix diff = Matrix::Zero(d - 1, d);
      for (int i = 0; i + 1 < d; ++i) {
        diff(i, i) = 1.0;
        diff(i, i + 1) = -1.0;
      }
      const std::int64_t rows = std::int64_t{1} << (d - 1);
      Matrix signs(rows, d - 1);
      for (std::int64_t s = 0; s < rows; ++s)
        for (int j = 0; j + 1 < d; ++j) signs(s, j) = (s >> j) & 1 ? 1.0 : -1.0;
      return {signs * diff, Vector::Constant(rows, param)};
    }
  }
  throw std::invalid_argument("builtin_constraints: unknown kind");
}

std::string constraint_set_to_json(const ConstraintSet& cs) {
  nlohmann::json j;
  j["A"] = nlohmann::json::array();
  for (int i = 0; i < cs.rows(); ++i) {
    std::vector<double> row(cs.a.cols());
    for (int k = 0; k < cs.a.cols(); ++k) row[k] = cs.a(i, k);
    j["A"].push_back(row);
  }
  j["b"] = std::vector<double>(cs.b.data(), cs.b.data() + cs.b.size());
  return j.dump();
}

ConstraintSet constraint_set_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  const auto& rows = j.at("A");
  const auto bvals = j.at("b").get<std::vector<double>>();
  const int r = static_cast<int>(rows.size());
  if (r != static_cast<int>(bvals.size()))
    throw std::invalid_argument("constraint_set_from_json: A and b sizes differ");
  const int d = r > 0 ? static_cast<int>(rows[0].size()) : 0;
  ConstraintSet cs{Matrix(r, d), Vector(r)};
  for (int i = 0; i < r; ++i) {
    const auto row = rows[i].get<std::vector<double>>();
    if (static_cast<int>(row.size()) != d)
      throw std::invalid_argument("constraint_set_from_json: ragged A");
    for (int k = 0; k < d; ++k) cs.a(i, k) = row[k];
    cs.b[i] = bvals[i];
  }
  return cs;
}

ActiveSet active_set(const ConstraintSet& cs, const Vector& theta, double tol_act) {
  if (!(tol_act > 0)) throw std::invalid_argument("active_set: tol_act must be > 0");
  ActiveSet out;
  if (cs.rows() == 0) return out;
  const Vector slack = cs.b - cs.a * theta;
  if ((slack.array() < -tol_act).any())
    throw std::runtime_error("active_set: infeasible point beyond tolerance");
  for (int i = 0; i < cs.rows(); ++i)
    if (slack[i] <= tol_act) out.indices.push_back(i);
  return out;
}

OrthoBasis ortho_complement_basis(const ConstraintSet& cs, const ActiveSet& aset) {
  const int d = cs.dim();
  if (aset.indices.empty()) return {Matrix::Identity(d, d)};
  const Matrix aa = active_rows(cs, aset);
  Eigen::JacobiSVD<Matrix> svd(aa, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double thresh = sv.size() > 0 ? kRankTolRel * sv[0] : 0.0;
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i)
    if (sv[i] > thresh) ++rank;
  return {svd.matrixV().rightCols(d - rank)};
}

Vector nnls(const Matrix& m, const Vector& c) {
  const int p = static_cast<int>(m.cols());
  Vector lambda = Vector::Zero(p);
  if (p == 0) return lambda;
  std::vector<bool> passive(p, false);
  Vector resid = c;
  const double tol = 1e-12 * (1.0 + c.norm());
  const int max_outer = 3 * p + 30;

  for (int outer = 0; outer < max_outer; ++outer) {
    const Vector grad = m.transpose() * resid;
    int best = -1;
    double best_val = tol;
    for (int j = 0; j < p; ++j)
      if (!passive[j] && grad[j] > best_val) {
        best_val = grad[j];
        best = j;
      }
    if (best < 0) break;
    passive[best] = true;

    for (;;) {
      std::vector<int> idx;
      for (int j = 0; j < p; ++j)
        if (passive[j]) idx.push_back(j);
      Matrix mp(m.rows(), idx.size());
      for (size_t k = 0; k < idx.size(); ++k) mp.col(k) = m.col(idx[k]);
      const Vector sol = mp.colPivHouseholderQr().solve(c);

      if ((sol.array() > 0).all()) {
        lambda.setZero();
        for (size_t k = 0; k < idx.size(); ++k) lambda[idx[k]] = sol[k];
        break;
      }
      // Step back along the segment to the first coordinate hitting zero.
      double alpha = 1.0;
      for (size_t k = 0; k < idx.size(); ++k)
        if (sol[k] <= 0) {
          const double cur = lambda[idx[k]];
          if (cur - sol[k] > 0) alpha = std::min(alpha, cur / (cur - sol[k]));
        }
      for (size_t k = 0; k < idx.size(); ++k) {
        lambda[idx[k]] += alpha * (sol[k] - lambda[idx[k]]);
        if (lambda[idx[k]] <= 1e-14) {
          lambda[idx[k]] = 0.0;
          passive[idx[k]] = false;
        }
      }
    }
    resid = c - m * lambda;
  }
  return lambda;
}

SsospCertificate check_ssosp_constrained(const ModelSpec& model, const ConstraintSet& cs,
                                         const Vector& theta, const Vector& x,
                                         const PerturbationVector& w, const Tolerances& tol) {
  SsospCertificate cert;
  cert.theta_hat = theta;
  const LossEvaluation ev = model.loss(theta, x, w);
  cert.g_hat = ev.gradient;

  const Vector slack = cs.rows() > 0 ? Vector(cs.b - cs.a * theta) : Vector(0);
  cert.feasible = cs.rows() == 0 || (slack.array() >= -tol.tol_act).all();

  ActiveSet aset;
  for (int i = 0; i < cs.rows(); ++i) {
    if (slack[i] <= tol.tol_act)
      aset.indices.push_back(i);
    else if (slack[i] <= 10.0 * tol.tol_act)
      cert.borderline.push_back(i);
  }
  cert.active_or_support = aset.indices;

  // KKT: find lambda >= 0 supported on the active set with grad + A' lambda = 0.
  const double tol_kkt = tol.tol_kkt_rel * (1.0 + ev.gradient.norm());
  const Matrix aa = active_rows(cs, aset);
  const Vector lam_active = nnls(aa.transpose(), -ev.gradient);
  cert.multipliers = Vector::Zero(cs.rows());
  for (size_t k = 0; k < aset.indices.size(); ++k)
    cert.multipliers[aset.indices[k]] = lam_active[k];
  const double kkt_resid = (ev.gradient + aa.transpose() * lam_active).norm();
  cert.kkt_ok = kkt_resid <= tol_kkt;

  const OrthoBasis u = ortho_complement_basis(cs, aset);
  if (u.u.cols() == 0) {
    cert.second_order_ok = true;  // vacuous
    cert.min_proj_hess_eig = std::numeric_limits<double>::infinity();
  } else {
    cert.min_proj_hess_eig = min_eig(u.u.transpose() * ev.hessian * u.u);
    cert.second_order_ok = cert.min_proj_hess_eig >= tol.tol_pd;
  }
  return cert;
}

SsospCertificate check_ssosp_penalized(const ModelSpec& model, double lambda_l1,
                                       const Vector& theta, const Vector& x,
                                       const PerturbationVector& w, const Tolerances& tol) {
  if (!(lambda_l1 > 0)) throw std::invalid_argument("check_ssosp_penalized: lambda must be > 0");
  SsospCertificate cert;
  cert.theta_hat = theta;
  const LossEvaluation ev = model.loss(theta, x, w);
  cert.g_hat = ev.gradient;
  cert.feasible = true;  // no constraints in the penalized problem

  const int d = static_cast<int>(theta.size());
  const double tol_kkt = tol.tol_kkt_rel * (1.0 + ev.gradient.norm());
  cert.multipliers = Vector::Zero(d);
  cert.kkt_ok = true;
  for (int j = 0; j < d; ++j) {
    if (std::abs(theta[j]) > tol.tol_supp) {
      cert.active_or_support.push_back(j);
      const double s = theta[j] > 0 ? 1.0 : -1.0;
      cert.multipliers[j] = s;
      if (std::abs(ev.gradient[j] + lambda_l1 * s) > tol_kkt) cert.kkt_ok = false;
    } else {
      // Off-support the subgradient must absorb the gradient: |grad_j| <= lambda.
      cert.multipliers[j] = -ev.gradient[j] / lambda_l1;
      if (std::abs(ev.gradient[j]) > lambda_l1 + tol_kkt) cert.kkt_ok = false;
    }
  }

  const int ns = static_cast<int>(cert.active_or_support.size());
  if (ns == 0) {
    cert.second_order_ok = true;
    cert.min_proj_hess_eig = std::numeric_limits<double>::infinity();
  } else {
    Matrix hs(ns, ns);
    for (int a = 0; a < ns; ++a)
      for (int b = 0; b < ns; ++b)
        hs(a, b) = ev.hessian(cert.active_or_support[a], cert.active_or_support[b]);
    cert.min_proj_hess_eig = min_eig(hs);
    cert.second_order_ok = cert.min_proj_hess_eig >= tol.tol_pd;
  }
  return cert;
}

}  // namespace acss
