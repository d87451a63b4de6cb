#pragma once

#include <string>
#include <vector>

#include "acss/model.hpp"

namespace acss {

// Linear inequality system A theta <= b; r = 0 encodes the unconstrained case.
struct ConstraintSet {
  Matrix a;  // r x d
  Vector b;  // r

  int rows() const { return static_cast<int>(a.rows()); }
  int dim() const { return static_cast<int>(a.cols()); }
  bool feasible(const Vector& theta, double tol = 0.0) const {
    return rows() == 0 || ((a * theta - b).array() <= tol).all();
  }
  static ConstraintSet none(int d) { return {Matrix(0, d), Vector(0)}; }
};

enum class ConstraintKind {
  nonnegative,   // theta_i >= 0
  lower_bound,   // theta_i >= c
  monotone,      // theta_1 <= ... <= theta_d
  linf_ball,     // |theta|_inf <= C
  l1_ball,       // |theta|_1 <= C (2^d rows; rejected for d > 20)
  fused_l1,      // sum |theta_i - theta_{i+1}| <= C (2^{d-1} rows; d > 20 rejected)
};

ConstraintSet builtin_constraints(ConstraintKind kind, int d, double param = 0.0);

// JSON document {"A": [[...],...], "b": [...], "kind": "..."} (kind optional).
std::string constraint_set_to_json(const ConstraintSet& cs);
ConstraintSet constraint_set_from_json(const std::string& text);

// Sorted 0-based indices of constraints holding with equality (to tolerance).
struct ActiveSet {
  std::vector<int> indices;
};

ActiveSet active_set(const ConstraintSet& cs, const Vector& theta, double tol_act);

// Orthonormal basis U of the subspace orthogonal to the active rows;
// U U' is the projector onto span{A_i : i active}^perp.
struct OrthoBasis {
  Matrix u;  // d x (d - rank of active rows)
};

OrthoBasis ortho_complement_basis(const ConstraintSet& cs, const ActiveSet& aset);

struct Tolerances {
  double tol_act = 1e-8;
  double tol_kkt_rel = 1e-6;  // kkt tolerance is tol_kkt_rel * (1 + |grad|)
  double tol_pd = 1e-8;
  double tol_supp = 1e-10;
};

struct SsospCertificate {
  Vector theta_hat;
  Vector g_hat;  // gradient of the perturbed loss at theta_hat
  std::vector<int> active_or_support;
  Vector multipliers;  // KKT multipliers (constrained) or subgradient (penalized)
  bool feasible = false;
  bool kkt_ok = false;
  bool second_order_ok = false;
  double min_proj_hess_eig = 0.0;
  std::vector<int> borderline;  // nearly-active constraints, diagnostic only

  bool passes() const { return feasible && kkt_ok && second_order_ok; }
};

SsospCertificate check_ssosp_constrained(const ModelSpec& model, const ConstraintSet& cs,
                                         const Vector& theta, const Vector& x,
                                         const PerturbationVector& w,
                                         const Tolerances& tol = {});

SsospCertificate check_ssosp_penalized(const ModelSpec& model, double lambda_l1,
                                       const Vector& theta, const Vector& x,
                                       const PerturbationVector& w, const Tolerances& tol = {});

// argmin_{lambda >= 0} |m lambda - c|  (Lawson-Hanson)
Vector nnls(const Matrix& m, const Vector& c);

}  // namespace acss
