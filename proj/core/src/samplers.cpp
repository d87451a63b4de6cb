#include "acss/samplers.hpp"

#include <cmath>
#include <stdexcept>

namespace acss {

namespace {

// x-dependent part of the log target with the log f term dropped: the
// proposal's q-ratio cancels log f exactly, so chains only ever need
// gauss_exponent + log_det. Both families factorize over observations, so a
// proposal touching s coordinates is evaluated incrementally from cached
// gradient/Hessian sums instead of a full O(n) pass.
class ChainCache {
 public:
  bool init(const ConditioningState& state, const Vector& x) {
    gaussian_ = state.model().is_gaussian_linear();
    scale_ = static_cast<double>(state.model().dim()) /
             (2.0 * state.sigma() * state.sigma());
    // The regularizer part of grad L is x-independent; fold it into the target.
    target_ = state.g_hat - state.model().regularizer_gradient(state.theta_hat);
    grad_sum_.setZero(state.theta_hat.size());
    if (!gaussian_) hess_sum_.setZero(5, 5);
    for (int i = 0; i < x.size(); ++i) {
      const LossEvaluation cl = state.model().coord_loss(state.theta_hat, i, x[i]);
      grad_sum_ += cl.gradient;
      if (!gaussian_) hess_sum_ += cl.hessian;
    }
    const std::optional<double> ld = log_det(state);
    if (!ld) return false;
    core_ = gauss(grad_sum_) + *ld;
    commits_ = 0;
    return true;
  }

  double core() const { return core_; }

  // Candidate core after setting x[idx[k]] = vals[k]; pending deltas are kept
  // for a following commit().
  std::optional<double> propose(const ConditioningState& state, const Vector& x, const int* idx,
                                const double* vals, int s) {
    pending_grad_ = grad_sum_;
    if (!gaussian_) pending_hess_ = hess_sum_;
    for (int k = 0; k < s; ++k) {
      const LossEvaluation nw = state.model().coord_loss(state.theta_hat, idx[k], vals[k]);
      const LossEvaluation old = state.model().coord_loss(state.theta_hat, idx[k], x[idx[k]]);
      pending_grad_ += nw.gradient - old.gradient;
      if (!gaussian_) pending_hess_ += nw.hessian - old.hessian;
    }
    std::swap(grad_sum_, pending_grad_);
    std::swap(hess_sum_, pending_hess_);
    const std::optional<double> ld = log_det(state);
    std::swap(grad_sum_, pending_grad_);
    std::swap(hess_sum_, pending_hess_);
    if (!ld) return std::nullopt;
    pending_core_ = gauss(pending_grad_) + *ld;
    return pending_core_;
  }

  // Accept the pending proposal; x must already hold the new values.
  // Sums are rebuilt exactly every few dozen commits to cap drift.
  void commit(const ConditioningState& state, const Vector& x) {
    grad_sum_ = pending_grad_;
    if (!gaussian_) hess_sum_ = pending_hess_;
    core_ = pending_core_;
    if (++commits_ % 64 == 0) init(state, x);
  }

 private:
  double gauss(const Vector& grad_sum) const {
    return -scale_ * (target_ - grad_sum).squaredNorm();
  }

  std::optional<double> log_det(const ConditioningState& state) const {
    if (gaussian_) return 0.0;  // Hessian is x-independent for gaussian_linear
    const Matrix proj = state.u.transpose() * hess_sum_ * state.u;
    if (proj.rows() == 0) return 0.0;
    Eigen::LLT<Matrix> llt(proj);
    if (llt.info() != Eigen::Success) return std::nullopt;
    double s = 0.0;
    for (int i = 0; i < proj.rows(); ++i) s += std::log(llt.matrixL()(i, i));
    return 2.0 * s;
  }

  bool gaussian_ = false;
  double scale_ = 0.0;
  double core_ = 0.0;
  double pending_core_ = 0.0;
  int commits_ = 0;
  Vector target_;
  Vector grad_sum_, pending_grad_;
  Matrix hess_sum_, pending_hess_;
};

struct ChainScratch {
  std::vector<int> idx;
  std::vector<int> picked;
  std::vector<double> vals;
};

bool chain_step(const ConditioningState& state, Vector& x, ChainCache& cache, int s,
                bool check_membership, Rng& rng, ChainScratch& scratch) {
  const int n = static_cast<int>(x.size());
  auto& idx = scratch.idx;
  if (static_cast<int>(idx.size()) != n) {
    idx.resize(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
  }
  for (int k = 0; k < s; ++k)
    std::swap(idx[k], idx[k + static_cast<int>(rng.integer(n - k))]);
  scratch.picked.assign(idx.begin(), idx.begin() + s);
  scratch.vals.resize(s);
  for (int k = 0; k < s; ++k)
    scratch.vals[k] = state.model().sample_coord(state.theta_hat, scratch.picked[k], rng);

  const std::optional<double> cand =
      cache.propose(state, x, scratch.picked.data(), scratch.vals.data(), s);
  if (!cand) return false;
  if (!mh_accept(*cand - cache.core(), rng)) return false;
  // Membership is the expensive part of the indicator; defer it to proposals
  // that would otherwise be accepted.
  if (check_membership) {
    Vector proposal = x;
    for (int k = 0; k < s; ++k) proposal[scratch.picked[k]] = scratch.vals[k];
    if (!membership_check(state, proposal)) return false;
  }

  for (int k = 0; k < s; ++k) x[scratch.picked[k]] = scratch.vals[k];
  cache.commit(state, x);
  return true;
}

}  // namespace

CopySet degenerate_copies(const Vector& x, int m_copies) {
  if (m_copies < 1) throw std::invalid_argument("degenerate_copies: m_copies must be >= 1");
  CopySet out;
  out.method = CopyMethod::degenerate;
  out.copies.assign(m_copies, x);
  return out;
}

CopySet sample_exact_gaussian(const ConditioningState& state, int m_copies, Rng& rng) {
  if (m_copies < 1) throw std::invalid_argument("sample_exact_gaussian: m_copies must be >= 1");
  if (!state.model().is_gaussian_linear())
    throw std::invalid_argument("sample_exact_gaussian: gaussian_linear only");
  const auto& gl = state.model().linear();
  const int n = static_cast<int>(gl.z.rows());
  const double d = static_cast<double>(state.model().dim());
  const double s2 = state.sigma() * state.sigma();

  const Matrix c =
      Matrix::Identity(n, n) + (d / (s2 * gl.nu2)) * (gl.z * gl.z.transpose());
  Eigen::LLT<Matrix> llt(c);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sample_exact_gaussian: Cholesky failed");

  const Vector shift =
      gl.z * (state.model().regularizer_gradient(state.theta_hat) - state.g_hat);
  const Vector mean = gl.z * state.theta_hat + (d / s2) * llt.solve(shift);
  const double nu = std::sqrt(gl.nu2);

  CopySet out;
  out.method = CopyMethod::exact_gaussian;
  out.copies.reserve(m_copies);
  Vector xi(n);
  for (int m = 0; m < m_copies; ++m) {
    for (int i = 0; i < n; ++i) xi[i] = rng.normal();
    // cov = nu^2 C^{-1} = nu^2 L^{-T} L^{-1}
    out.copies.push_back(mean +
                         nu * llt.matrixU().solve(xi));
  }
  return out;
}

bool mh_accept(double log_ratio, Rng& rng) {
  if (log_ratio >= 0.0) return true;
  const double u = rng.uniform();
  return u > 0.0 && std::log(u) < log_ratio;
}

MhStepResult mh_step(const ConditioningState& state, const Vector& x_current,
                     const ProposalSpec& proposal, bool check_membership, Rng& rng) {
  const int n = static_cast<int>(x_current.size());
  if (proposal.s < 1 || proposal.s > n) throw std::invalid_argument("mh_step: s out of range");
  MhStepResult out;
  out.x = x_current;
  ChainCache cache;
  if (!cache.init(state, x_current))
    throw std::invalid_argument("mh_step: x_current fails the indicator");
  ChainScratch scratch;
  out.accepted = chain_step(state, out.x, cache, proposal.s, check_membership, rng, scratch);
  return out;
}

ProposalSpec tune_proposal_size(const ConditioningState& state, const std::vector<int>& candidates,
                                int n, Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("tune_proposal_size: no candidates");
  for (int s : candidates)
    if (s < 1 || s > n) throw std::invalid_argument("tune_proposal_size: candidate out of [1, n]");

  // The simulated fits do not depend on s, so one batch is shared by all
  // candidates.
  constexpr int kSims = 100;
  const int d = state.model().dim();
  std::vector<Vector> sims;
  std::vector<ConditioningState> sim_states;
  for (int t = 0; t < kSims; ++t) {
    Rng sub = rng.substream(1, t);
    const Vector x_sim = state.model().simulate(state.theta_hat, n, sub);
    const PerturbationVector w = draw_perturbation(d, state.sigma(), sub);
    FitResult res;
    try {
      res = fit(state.problem, x_sim, w);
    } catch (const std::exception&) {
      continue;
    }
    if (!res.converged || !res.certificate.passes()) continue;
    sims.push_back(x_sim);
    sim_states.push_back(make_state(state.problem, res.certificate));
  }
  if (sims.empty())
    throw std::runtime_error("tune_proposal_size: all simulated fits failed SSOSP");

  ProposalSpec best;
  double best_score = -1.0;
  double best_abar = -1.0;
  int best_abar_s = candidates.front();
  for (int s : candidates) {
    int accepted = 0;
    for (size_t j = 0; j < sims.size(); ++j) {
      Rng sub = rng.substream(2, static_cast<std::uint64_t>(s), j);
      ChainScratch scratch;
      ChainCache cache;
      Vector x = sims[j];
      if (!cache.init(sim_states[j], x)) continue;
      if (chain_step(sim_states[j], x, cache, s, true, sub, scratch)) ++accepted;
    }
    const double abar = static_cast<double>(accepted) / static_cast<double>(sims.size());
    if (abar > best_abar) {
      best_abar = abar;
      best_abar_s = s;
    }
    if (abar >= 0.05 && s * abar > best_score) {
      best_score = s * abar;
      best.s = s;
      best.abar = abar;
    }
  }
  if (best_score < 0) {
    best.s = best_abar_s;
    best.abar = best_abar;
    best.warning = true;
  }
  return best;
}

int chain_length(int s, double abar, int n) {
  if (!(abar > 0)) throw std::invalid_argument("chain_length: abar must be > 0");
  if (s < 1 || n < 1) throw std::invalid_argument("chain_length: s and n must be >= 1");
  const double raw = std::ceil(2.0 * n / (s * abar));
  return static_cast<int>(std::min(2000.0, std::max(raw, 1.0)));
}

CopySet hub_and_spoke(const ConditioningState& state, const Vector& x_data, int m_copies,
                      int l_steps, const ProposalSpec& proposal, bool check_membership,
                      Rng& rng) {
  if (m_copies < 1 || l_steps < 1)
    throw std::invalid_argument("hub_and_spoke: m_copies and l_steps must be >= 1");
  ChainCache hub_cache;
  if (!hub_cache.init(state, x_data))
    throw std::invalid_argument("hub_and_spoke: x_data fails the indicator");

  CopySet out;
  out.method = CopyMethod::hub_and_spoke;
  out.l_steps = l_steps;
  out.proposal_s = proposal.s;

  long accepted = 0;
  ChainScratch scratch;

  Vector hub = x_data;
  {
    Rng sub = rng.substream(0);
    for (int t = 0; t < l_steps; ++t)
      if (chain_step(state, hub, hub_cache, proposal.s, check_membership, sub, scratch))
        ++accepted;
  }
  out.hub = hub;

  out.copies.reserve(m_copies);
  for (int m = 1; m <= m_copies; ++m) {
    Rng sub = rng.substream(static_cast<std::uint64_t>(m));
    Vector x = hub;
    ChainCache cache = hub_cache;
    for (int t = 0; t < l_steps; ++t)
      if (chain_step(state, x, cache, proposal.s, check_membership, sub, scratch)) ++accepted;
    out.copies.push_back(std::move(x));
  }
  out.acceptance_rate =
      static_cast<double>(accepted) / (static_cast<double>(l_steps) * (m_copies + 1));
  return out;
}

}  // namespace acss
