#pragma once

#include <vector>

#include "acss/rng.hpp"
#include "acss/types.hpp"

namespace acss {

struct PValue {
  double value = 1.0;  // always on the grid {(1+j)/(M+1) : j = 0..M}
};

// (1/(M+1)) (1 + sum 1{T(copy) >= t_obs}); ties count as >=.
PValue compute_pvalue(double t_obs, const std::vector<double>& t_copies);

struct SparsityBasis {
  std::vector<Vector> vectors;

  int p() const { return static_cast<int>(vectors.size()); }
  int d() const { return vectors.empty() ? 0 : static_cast<int>(vectors[0].size()); }

  static SparsityBasis canonical(int d);
  static SparsityBasis changepoint(int d);  // v_i = e_1 + ... + e_i
};

// |w|_{v,0}: minimum number of basis vectors whose span contains w; +inf if
// w is outside the span of all of them. Canonical and changepoint bases use
// closed forms; otherwise exhaustive subset search (requires p <= 20).
double v_sparsity(const Vector& w, const SparsityBasis& basis);

// Closed-form cap min(4 k ln(4p/k), d).
double h_v_bound(int k, int p, int d);

struct MonteCarloEstimate {
  double mean = 0.0;
  double se = 0.0;
};

// h_v(k) = E[max_{|S| <= k} |P_{v_S} Z|^2], Z ~ N(0, I_d), by Monte Carlo.
// Canonical bases use the sum of the k largest Z_i^2; other bases enumerate
// the size-k subsets (choose(p, k) <= 1e6 required).
MonteCarloEstimate h_v_mc(const SparsityBasis& basis, int k, int n_samples, Rng& rng);

struct TestStatistic {
  enum class Kind { kmeans_wcss_decrease, abs_correlation, elastic_net_coef };
  Kind kind = Kind::kmeans_wcss_decrease;
  int restarts = 10;     // kmeans
  Vector y;              // correlation / elastic net response
  Matrix z;              // elastic net side covariates
  double lambda_ridge_t = 1.5;
  double lambda_l1_t = 7.0;

  static TestStatistic kmeans_wcss_decrease(int restarts = 10);
  static TestStatistic abs_correlation(Vector y);
  static TestStatistic elastic_net_coef(Vector y, Matrix z, double lambda_ridge = 1.5,
                                        double lambda_l1 = 7.0);
};

// kmeans: best-of-restarts WCSS(2) - WCSS(3) with k-means++ seeding from rng;
// abs_correlation: |corr(x, y)|, 0 when either side has zero variance;
// elastic_net_coef: |beta_X| minimizing 1/2 |y - x b_X - Z b|^2
//   + lambda_ridge |b|^2 + lambda_l1 |b|_1 with b_X unpenalized.
double evaluate_statistic(const TestStatistic& ts, const Vector& x, Rng& rng);

}  // namespace acss
