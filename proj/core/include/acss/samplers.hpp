#pragma once

#include "acss/cond_density.hpp"

namespace acss {

enum class CopyMethod { exact_gaussian, hub_and_spoke, degenerate };

struct CopySet {
  std::vector<Vector> copies;
  CopyMethod method = CopyMethod::degenerate;
  int l_steps = 0;        // hub_and_spoke only
  int proposal_s = 0;     // hub_and_spoke only
  Vector hub;             // hub_and_spoke only
  double acceptance_rate = 0.0;
};

// SSOSP failure path: every copy equals the observed data.
CopySet degenerate_copies(const Vector& x, int m_copies);

// i.i.d. draws from N(Z theta_hat + (d/sigma^2) C^{-1} Z (grad R - g_hat),
// nu^2 C^{-1}) with C = I + (d/(sigma^2 nu^2)) Z Z'.
CopySet sample_exact_gaussian(const ConditioningState& state, int m_copies, Rng& rng);

// Proposal: resample s coordinates i.i.d. from the per-coordinate plug-in
// density. The q-ratio cancels the log f part of the density ratio exactly,
// so acceptance uses only the gauss_exponent and log_det deltas.
struct ProposalSpec {
  int s = 1;
  double abar = 0.0;  // average acceptance observed during tuning
  bool warning = false;  // no candidate reached the 0.05 eligibility floor
};

// Simulation-based tuning: 100 draws X ~ P_theta_hat with fresh perturbations,
// refit and keep the SSOSP ones, one MH step per kept draw and candidate s;
// pick argmax s * abar_s among abar_s >= 0.05, else largest abar_s (warning).
// Indicator rejections count as rejections.
ProposalSpec tune_proposal_size(const ConditioningState& state, const std::vector<int>& candidates,
                                int n, Rng& rng);

// L = min(2000, ceil(2 n / (s * abar)))
int chain_length(int s, double abar, int n);

// Accept/reject decision for a log acceptance ratio.
bool mh_accept(double log_ratio, Rng& rng);

struct MhStepResult {
  Vector x;
  bool accepted = false;
};

MhStepResult mh_step(const ConditioningState& state, const Vector& x_current,
                     const ProposalSpec& proposal, bool check_membership, Rng& rng);

// Run the chain L steps from x_data to form the hub, then M independent
// spokes of L steps each from the hub.
CopySet hub_and_spoke(const ConditioningState& state, const Vector& x_data, int m_copies,
                      int l_steps, const ProposalSpec& proposal, bool check_membership, Rng& rng);

}  // namespace acss
