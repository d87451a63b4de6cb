#include <doctest.h>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "acss/samplers.hpp"
#include "test_util.hpp"

using namespace acss;
using testutil::normal_cdf;

namespace {

Vector random_vector(int n, Rng& rng) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Matrix random_matrix(int r, int d, Rng& rng) {
  Matrix m(r, d);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < d; ++j) m(i, j) = rng.normal();
  return m;
}

ConditioningState gaussian_state(Matrix z, double nu2, double ridge, double sigma,
                                 const Vector& theta_hat, const Vector& g_hat) {
  const int d = static_cast<int>(z.cols());
  const ModelSpec model = ModelSpec::gaussian_linear(std::move(z), nu2, ridge);
  const EstimationProblem problem = EstimationProblem::constrained(
      model, ConstraintSet::none(d), sigma, SolverKind::activeset_qp);
  return ConditioningState{problem, theta_hat, g_hat, {}, Matrix::Identity(d, d)};
}

struct Moments {
  Vector mean;
  Matrix cov;
};

Moments empirical_moments(const std::vector<Vector>& draws) {
  const int n = static_cast<int>(draws[0].size());
  Vector mean = Vector::Zero(n);
  for (const Vector& x : draws) mean += x;
  mean /= static_cast<double>(draws.size());
  Matrix cov = Matrix::Zero(n, n);
  for (const Vector& x : draws) cov += (x - mean) * (x - mean).transpose();
  cov /= static_cast<double>(draws.size());
  return {mean, cov};
}

void check_moments(const std::vector<Vector>& draws, const Vector& mean, const Matrix& cov) {
  const Moments m = empirical_moments(draws);
  const double nd = static_cast<double>(draws.size());
  for (int i = 0; i < mean.size(); ++i)
    CHECK(std::abs(m.mean[i] - mean[i]) <= 3.0 * std::sqrt(cov(i, i) / nd));
  for (int i = 0; i < mean.size(); ++i)
    for (int j = 0; j <= i; ++j) {
      const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / nd);
      CHECK(std::abs(m.cov(i, j) - cov(i, j)) <= 3.0 * se);
    }
}

}  // namespace

TEST_CASE("degenerate copies are bitwise equal to the data") {
  Rng rng(71);
  const Vector x = random_vector(7, rng);
  const CopySet cs = degenerate_copies(x, 5);
  CHECK(cs.method == CopyMethod::degenerate);
  CHECK(cs.copies.size() == 5);
  for (const Vector& c : cs.copies) CHECK((c.array() == x.array()).all());
  CHECK_THROWS_AS(degenerate_copies(x, 0), std::invalid_argument);
}

TEST_CASE("exact Gaussian sampler: isotonic specialization") {
  Rng rng(72);
  const int n = 4;
  const double sigma = 2.0;
  const Vector theta_hat = random_vector(n, rng);
  const Vector g_hat = 0.5 * random_vector(n, rng);
  const ConditioningState st =
      gaussian_state(Matrix::Identity(n, n), 1.0, 0.0, sigma, theta_hat, g_hat);

  // Appendix-style specialization: Z = I, nu2 = 1, R = 0, d = n
  const double r = (n / (sigma * sigma)) / (1.0 + n / (sigma * sigma));
  const Vector mean_spec = theta_hat - r * g_hat;
  const Matrix cov_spec =
      Matrix::Identity(n, n) / (1.0 + n / (sigma * sigma));

  // generic mean formula must agree with the specialization exactly
  const Matrix c = Matrix::Identity(n, n) + (n / (sigma * sigma)) * Matrix::Identity(n, n);
  const Vector mean_gen =
      theta_hat + (n / (sigma * sigma)) * c.llt().solve(Vector(-g_hat));
  CHECK((mean_gen - mean_spec).norm() <= 1e-10);

  Rng srng(720);
  const CopySet cs = sample_exact_gaussian(st, 100000, srng);
  CHECK(cs.method == CopyMethod::exact_gaussian);
  check_moments(cs.copies, mean_spec, cov_spec);
}

TEST_CASE("exact Gaussian sampler: elastic-net specialization and generic design") {
  Rng rng(73);
  const int n = 5, d = 3;
  const double sigma = 3.0, ridge = 0.4;
  const Matrix z = random_matrix(n, d, rng);
  const Vector theta_hat = random_vector(d, rng);
  const Vector g_hat = random_vector(d, rng);
  const ConditioningState st = gaussian_state(z, 1.0, ridge, sigma, theta_hat, g_hat);

  const double s2 = sigma * sigma;
  const Matrix c = Matrix::Identity(n, n) + (d / s2) * z * z.transpose();
  const Vector mean =
      z * theta_hat + (d / s2) * c.llt().solve(Vector(z * (ridge * theta_hat - g_hat)));
  const Matrix cov = c.llt().solve(Matrix::Identity(n, n));

  Rng srng(730);
  const CopySet cs = sample_exact_gaussian(st, 100000, srng);
  check_moments(cs.copies, mean, cov);
}

TEST_CASE("exact Gaussian sampler: huge sigma recovers N(Z theta_hat, nu2 I)") {
  Rng rng(74);
  const int n = 4, d = 2;
  const Matrix z = random_matrix(n, d, rng);
  const double nu2 = 1.5;
  const ConditioningState st =
      gaussian_state(z, nu2, 0.0, 1e8, random_vector(d, rng), random_vector(d, rng));
  Rng srng(740);
  const CopySet cs = sample_exact_gaussian(st, 100000, srng);
  check_moments(cs.copies, z * st.theta_hat, nu2 * Matrix::Identity(n, n));
}

TEST_CASE("exact Gaussian sampler validates its inputs") {
  Rng rng(75);
  const ConditioningState st =
      gaussian_state(Matrix::Identity(2, 2), 1.0, 0.0, 1.0, Vector::Zero(2), Vector::Zero(2));
  CHECK_THROWS_AS(sample_exact_gaussian(st, 0, rng), std::invalid_argument);

  const ModelSpec mixture = ModelSpec::gaussian_mixture2();
  const EstimationProblem mp = EstimationProblem::constrained(
      mixture, mixture_sd_constraints(0.1), 1.0, SolverKind::projected_gradient);
  Vector theta(5);
  theta << 0.5, 0.4, 0.2, -0.4, 0.2;
  const ConditioningState ms{mp, theta, Vector::Zero(5), {}, Matrix::Identity(5, 5)};
  CHECK_THROWS_AS(sample_exact_gaussian(ms, 3, rng), std::invalid_argument);
}

TEST_CASE("chain_length formula") {
  CHECK(chain_length(10, 1.0, 200) == 40);
  CHECK(chain_length(1, 0.01, 200) == 2000);
  CHECK(chain_length(7, 1.0, 7) == 2);
  CHECK(chain_length(3, 0.7, 50) == 48);  // ceil(100 / 2.1)
  CHECK_THROWS_AS(chain_length(1, 0.0, 10), std::invalid_argument);
}

TEST_CASE("mh_accept") {
  Rng rng(76);
  CHECK(mh_accept(0.0, rng));
  CHECK(mh_accept(3.0, rng));
  for (int k = 0; k < 100; ++k)
    CHECK_FALSE(mh_accept(-std::numeric_limits<double>::infinity(), rng));
  int acc = 0;
  const int n = 100000;
  const double target = 0.3;
  for (int k = 0; k < n; ++k)
    if (mh_accept(std::log(target), rng)) ++acc;
  CHECK(static_cast<double>(acc) / n == doctest::Approx(target).epsilon(0.05));
}

TEST_CASE("mh_step kernel is stationary and balanced on a lumped 2-state target") {
  Rng rng(77);
  // n = d = 1: the target is N(m, v) with v = 1/C
  const double sigma = 2.0;
  Vector theta_hat(1), g_hat(1);
  theta_hat << 0.4;
  g_hat << 0.6;
  const ConditioningState st =
      gaussian_state(Matrix::Identity(1, 1), 1.0, 0.0, sigma, theta_hat, g_hat);
  const double c = 1.0 + 1.0 / (sigma * sigma);
  const double m = theta_hat[0] - (1.0 / (sigma * sigma)) / c * g_hat[0];

  const ProposalSpec prop{1, 0.5, false};
  Vector x(1);
  x << m;
  // burn-in, then lump the chain into {x < m} vs {x >= m}
  for (int t = 0; t < 2000; ++t) x = mh_step(st, x, prop, false, rng).x;
  const int steps = 200000;
  long in_a = 0, ab = 0, ba = 0;
  bool prev_a = x[0] < m;
  for (int t = 0; t < steps; ++t) {
    x = mh_step(st, x, prop, false, rng).x;
    const bool cur_a = x[0] < m;
    if (cur_a) ++in_a;
    if (prev_a && !cur_a) ++ab;
    if (!prev_a && cur_a) ++ba;
    prev_a = cur_a;
  }
  // stationary occupancy of each half is exactly 1/2
  CHECK(std::abs(static_cast<double>(in_a) / steps - 0.5) <= 1e-2);
  // reversibility: stationary flow A->B equals flow B->A
  CHECK(std::abs(static_cast<double>(ab - ba)) / steps <= 1e-3);
}

TEST_CASE("mh_step validates the proposal size") {
  Rng rng(78);
  const ConditioningState st =
      gaussian_state(Matrix::Identity(3, 3), 1.0, 0.0, 2.0, Vector::Zero(3), Vector::Zero(3));
  CHECK_THROWS_AS(mh_step(st, Vector::Zero(3), ProposalSpec{0, 0.5, false}, false, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(mh_step(st, Vector::Zero(3), ProposalSpec{4, 0.5, false}, false, rng),
                  std::invalid_argument);
}

TEST_CASE("hub_and_spoke structure and determinism") {
  Rng rng(79);
  const int n = 4;
  const ConditioningState st = gaussian_state(Matrix::Identity(n, n), 1.0, 0.0, 2.0,
                                              random_vector(n, rng), random_vector(n, rng));
  const Vector x = random_vector(n, rng);
  const ProposalSpec prop{1, 0.5, false};

  Rng r1(790), r2(790), r3(791);
  const CopySet a = hub_and_spoke(st, x, 3, 5, prop, false, r1);
  const CopySet b = hub_and_spoke(st, x, 3, 5, prop, false, r2);
  const CopySet c = hub_and_spoke(st, x, 3, 5, prop, false, r3);
  CHECK(a.method == CopyMethod::hub_and_spoke);
  CHECK(a.copies.size() == 3);
  CHECK(a.l_steps == 5);
  CHECK(a.proposal_s == 1);
  CHECK(a.hub.size() == n);
  CHECK(a.acceptance_rate >= 0.0);
  CHECK(a.acceptance_rate <= 1.0);
  for (int m = 0; m < 3; ++m) CHECK((a.copies[m] - b.copies[m]).norm() == 0.0);
  CHECK((a.hub - b.hub).norm() == 0.0);
  bool any_diff = (a.hub - c.hub).norm() > 0;
  for (int m = 0; m < 3; ++m) any_diff = any_diff || (a.copies[m] - c.copies[m]).norm() > 0;
  CHECK(any_diff);

  CHECK_THROWS_AS(hub_and_spoke(st, x, 0, 5, prop, false, rng), std::invalid_argument);
  CHECK_THROWS_AS(hub_and_spoke(st, x, 3, 0, prop, false, rng), std::invalid_argument);
}

TEST_CASE("tune_proposal_size on a Gaussian conditioning state") {
  Rng rng(80);
  const int n = 10;
  const ModelSpec model = ModelSpec::gaussian_linear(Matrix::Identity(n, n), 1.0, 0.0);
  const EstimationProblem problem = EstimationProblem::constrained(
      model, builtin_constraints(ConstraintKind::monotone, n), 2.0, SolverKind::pava);
  const Vector x = random_vector(n, rng);
  const PerturbationVector w = draw_perturbation(n, 2.0, rng);
  const FitResult res = fit(problem, x, w);
  REQUIRE(res.certificate.passes());
  const ConditioningState st = make_state(problem, res.certificate);

  Rng t1(801);
  const ProposalSpec single = tune_proposal_size(st, {1}, n, t1);
  CHECK(single.s == 1);
  CHECK(single.abar > 0.0);
  CHECK(single.abar <= 1.0);

  Rng t2(802);
  const ProposalSpec multi = tune_proposal_size(st, {1, 2, 5}, n, t2);
  CHECK((multi.s == 1 || multi.s == 2 || multi.s == 5));
  CHECK(multi.abar >= 0.0);
  CHECK(multi.abar <= 1.0);

  Rng t3(803);
  CHECK_THROWS_AS(tune_proposal_size(st, {}, n, t3), std::invalid_argument);
  CHECK_THROWS_AS(tune_proposal_size(st, {n + 1}, n, t3), std::invalid_argument);
}
