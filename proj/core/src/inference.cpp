#include "acss/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace acss {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool is_canonical_like(const SparsityBasis& basis) {
  const int d = basis.d();
  if (basis.p() != d) return false;
  std::vector<bool> covered(d, false);
  for (const Vector& v : basis.vectors) {
    int nz = -1;
    for (int j = 0; j < d; ++j) {
      if (v[j] != 0.0) {
        if (nz >= 0) return false;
        nz = j;
      }
    }
    if (nz < 0 || covered[nz]) return false;
    covered[nz] = true;
  }
  return true;
}

bool is_changepoint(const SparsityBasis& basis) {
  const int d = basis.d();
  if (basis.p() != d) return false;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (basis.vectors[i][j] != (j <= i ? 1.0 : 0.0)) return false;
  return true;
}

// Visit all size-k subsets of {0..p-1}.
template <typename F>
void for_each_subset(int p, int k, F&& f) {
  std::vector<int> idx(k);
  for (int i = 0; i < k; ++i) idx[i] = i;
  for (;;) {
    f(idx);
    int i = k - 1;
    while (i >= 0 && idx[i] == p - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (int j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

double choose(int p, int k) {
  double c = 1.0;
  for (int i = 0; i < k; ++i) c *= static_cast<double>(p - i) / (i + 1);
  return c;
}

bool in_span(const Vector& w, const SparsityBasis& basis, const std::vector<int>& idx) {
  if (idx.empty()) return w.norm() == 0.0;
  Matrix m(w.size(), idx.size());
  for (size_t k = 0; k < idx.size(); ++k) m.col(k) = basis.vectors[idx[k]];
  const Vector coef = m.colPivHouseholderQr().solve(w);
  return (m * coef - w).norm() <= 1e-9 * (1.0 + w.norm());
}

double wcss_lloyd(const Vector& x, int k, int restarts, Rng& rng) {
  const int n = static_cast<int>(x.size());
  double best = kInf;
  std::vector<double> centers(k);
  std::vector<int> assign(n);
  for (int r = 0; r < restarts; ++r) {
    // k-means++ seeding
    centers[0] = x[rng.integer(n)];
    std::vector<double> dist2(n);
    for (int c = 1; c < k; ++c) {
      double total = 0.0;
      for (int i = 0; i < n; ++i) {
        double d2 = kInf;
        for (int j = 0; j < c; ++j) d2 = std::min(d2, (x[i] - centers[j]) * (x[i] - centers[j]));
        dist2[i] = d2;
        total += d2;
      }
      if (total <= 0) {
        centers[c] = x[rng.integer(n)];
        continue;
      }
      double target = rng.uniform() * total;
      int pick = n - 1;
      for (int i = 0; i < n; ++i) {
        target -= dist2[i];
        if (target <= 0) {
          pick = i;
          break;
        }
      }
      centers[c] = x[pick];
    }

    for (int it = 0; it < 100; ++it) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int bestc = 0;
        double bd = std::abs(x[i] - centers[0]);
        for (int j = 1; j < k; ++j) {
          const double dj = std::abs(x[i] - centers[j]);
          if (dj < bd) {
            bd = dj;
            bestc = j;
          }
        }
        if (it == 0 || assign[i] != bestc) {
          assign[i] = bestc;
          changed = true;
        }
      }
      if (!changed) break;
      for (int j = 0; j < k; ++j) {
        double s = 0.0;
        int cnt = 0;
        for (int i = 0; i < n; ++i)
          if (assign[i] == j) {
            s += x[i];
            ++cnt;
          }
        if (cnt > 0)
          centers[j] = s / cnt;
        else
          centers[j] = x[rng.integer(n)];
      }
    }

    double wcss = 0.0;
    for (int i = 0; i < n; ++i)
      wcss += (x[i] - centers[assign[i]]) * (x[i] - centers[assign[i]]);
    best = std::min(best, wcss);
  }
  return best;
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

}  // namespace

PValue compute_pvalue(double t_obs, const std::vector<double>& t_copies) {
  if (t_copies.empty()) throw std::invalid_argument("compute_pvalue: no copies");
  long count = 0;
  for (double t : t_copies)
    if (t >= t_obs) ++count;
  return {(1.0 + count) / (1.0 + t_copies.size())};
}

SparsityBasis SparsityBasis::canonical(int d) {
  SparsityBasis b;
  for (int i = 0; i < d; ++i) {
    Vector v = Vector::Zero(d);
    v[i] = 1.0;
    b.vectors.push_back(std::move(v));
  }
  return b;
}

SparsityBasis SparsityBasis::changepoint(int d) {
  SparsityBasis b;
  for (int i = 0; i < d; ++i) {
    Vector v = Vector::Zero(d);
    v.head(i + 1).setOnes();
    b.vectors.push_back(std::move(v));
  }
  return b;
}

double v_sparsity(const Vector& w, const SparsityBasis& basis) {
  const int d = static_cast<int>(w.size());
  if (basis.d() != d) throw std::invalid_argument("v_sparsity: dimension mismatch");
  if (w.norm() == 0.0) return 0.0;

  if (is_canonical_like(basis)) {
    int nz = 0;
    for (int j = 0; j < d; ++j)
      if (w[j] != 0.0) ++nz;
    return nz;
  }
  if (is_changepoint(basis)) {
    // Coefficients of w in the full basis are c_i = w_i - w_{i+1} (c_d = w_d).
    int nz = 0;
    for (int i = 0; i < d; ++i) {
      const double c = i + 1 < d ? w[i] - w[i + 1] : w[i];
      if (c != 0.0) ++nz;
    }
    return nz;
  }

  const int p = basis.p();
  if (p > 20) throw std::invalid_argument("v_sparsity: exhaustive search requires p <= 20");
  for (int k = 1; k <= p; ++k) {
    bool found = false;
    for_each_subset(p, k, [&](const std::vector<int>& idx) {
      if (!found && in_span(w, basis, idx)) found = true;
    });
    if (found) return k;
  }
  return kInf;
}

double h_v_bound(int k, int p, int d) {
  if (k < 1 || k > d) throw std::invalid_argument("h_v_bound: k must be in [1, d]");
  if (p < 1) throw std::invalid_argument("h_v_bound: p must be >= 1");
  return std::min(4.0 * k * std::log(4.0 * p / k), static_cast<double>(d));
}

MonteCarloEstimate h_v_mc(const SparsityBasis& basis, int k, int n_samples, Rng& rng) {
  const int p = basis.p();
  const int d = basis.d();
  if (k < 1 || k > p) throw std::invalid_argument("h_v_mc: k must be in [1, p]");
  if (n_samples < 2) throw std::invalid_argument("h_v_mc: n_samples must be >= 2");

  const bool canonical = is_canonical_like(basis);
  std::vector<Matrix> projections;
  if (!canonical) {
    if (choose(p, k) > 1e6)
      throw std::invalid_argument("h_v_mc: subset enumeration infeasible for these (p, k)");
    for_each_subset(p, k, [&](const std::vector<int>& idx) {
      Matrix m(d, k);
      for (int j = 0; j < k; ++j) m.col(j) = basis.vectors[idx[j]];
      // Thin orthonormal basis of the span; |Q' z|^2 is the projection norm.
      Eigen::HouseholderQR<Matrix> qr(m);
      projections.push_back(Matrix(qr.householderQ()).leftCols(k));
    });
  }

  double sum = 0.0, sum2 = 0.0;
  Vector z(d);
  std::vector<double> z2(d);
  for (int t = 0; t < n_samples; ++t) {
    for (int j = 0; j < d; ++j) z[j] = rng.normal();
    double val = 0.0;
    if (canonical) {
      for (int j = 0; j < d; ++j) z2[j] = z[j] * z[j];
      std::nth_element(z2.begin(), z2.begin() + (d - k), z2.end());
      for (int j = d - k; j < d; ++j) val += z2[j];
    } else {
      for (const Matrix& q : projections) val = std::max(val, (q.transpose() * z).squaredNorm());
    }
    sum += val;
    sum2 += val * val;
  }
  const double mean = sum / n_samples;
  const double var = std::max(0.0, sum2 / n_samples - mean * mean);
  return {mean, std::sqrt(var / n_samples)};
}

TestStatistic TestStatistic::kmeans_wcss_decrease(int restarts) {
  TestStatistic t;
  t.kind = Kind::kmeans_wcss_decrease;
  t.restarts = restarts;
  return t;
}

TestStatistic TestStatistic::abs_correlation(Vector y) {
  TestStatistic t;
  t.kind = Kind::abs_correlation;
  t.y = std::move(y);
  return t;
}

TestStatistic TestStatistic::elastic_net_coef(Vector y, Matrix z, double lambda_ridge,
                                              double lambda_l1) {
  TestStatistic t;
  t.kind = Kind::elastic_net_coef;
  t.y = std::move(y);
  t.z = std::move(z);
  t.lambda_ridge_t = lambda_ridge;
  t.lambda_l1_t = lambda_l1;
  return t;
}

double evaluate_statistic(const TestStatistic& ts, const Vector& x, Rng& rng) {
  switch (ts.kind) {
    case TestStatistic::Kind::kmeans_wcss_decrease: {
      const double w2 = wcss_lloyd(x, 2, ts.restarts, rng);
      const double w3 = wcss_lloyd(x, 3, ts.restarts, rng);
      return w2 - w3;
    }
    case TestStatistic::Kind::abs_correlation: {
      if (ts.y.size() != x.size())
        throw std::invalid_argument("evaluate_statistic: size mismatch");
      const double mx = x.mean(), my = ts.y.mean();
      const double vx = (x.array() - mx).square().sum();
      const double vy = (ts.y.array() - my).square().sum();
      if (vx <= 0 || vy <= 0) return 0.0;
      const double cov = ((x.array() - mx) * (ts.y.array() - my)).sum();
      return std::abs(cov / std::sqrt(vx * vy));
    }
    case TestStatistic::Kind::elastic_net_coef: {
      // 1/2 |y - x bx - Z b|^2 + lr |b|^2 + l1 |b|_1, bx unpenalized.
      const int p = static_cast<int>(ts.z.cols());
      if (ts.y.size() != x.size() || ts.z.rows() != x.size())
        throw std::invalid_argument("evaluate_statistic: size mismatch");
      const double xx = x.squaredNorm();
      if (xx <= 0) return 0.0;
      double bx = 0.0;
      Vector b = Vector::Zero(p);
      Vector resid = ts.y;
      Vector colnorm(p);
      for (int j = 0; j < p; ++j) colnorm[j] = ts.z.col(j).squaredNorm();
      for (int sweep = 0; sweep < 2000; ++sweep) {
        double max_delta = 0.0;
        {
          const double next = x.dot(resid + x * bx) / xx;
          resid += x * (bx - next);
          max_delta = std::max(max_delta, std::abs(next - bx));
          bx = next;
        }
        for (int j = 0; j < p; ++j) {
          if (colnorm[j] + 2.0 * ts.lambda_ridge_t <= 0) continue;
          const double rho = ts.z.col(j).dot(resid) + colnorm[j] * b[j];
          const double next = soft_threshold(rho, ts.lambda_l1_t) /
                              (colnorm[j] + 2.0 * ts.lambda_ridge_t);
          if (next != b[j]) {
            resid += ts.z.col(j) * (b[j] - next);
            max_delta = std::max(max_delta, std::abs(next - b[j]));
            b[j] = next;
          }
        }
        if (max_delta <= 1e-12) break;
      }
      return std::abs(bx);
    }
  }
  throw std::invalid_argument("evaluate_statistic: unknown statistic");
}

}  // namespace acss
