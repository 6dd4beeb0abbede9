// Test-only oracles, kept independent of the implementation paths they
// check: central finite differences for gradients, the scalar proof-side
// formulas for the reparameterization, and a generator of random valid
// reparameterization instances for fuzzing.
#ifndef LEARNSAM_TESTS_ORACLES_HPP_
#define LEARNSAM_TESTS_ORACLES_HPP_

#include <functional>
#include <vector>

#include "learnsam/common.hpp"

namespace oracles {

using learnsam::Mat;
using learnsam::Rng;
using learnsam::Vec;

inline Vec finite_diff_grad(const std::function<double(const Vec&)>& f,
                            const Vec& x, double step = 1e-5) {
  Vec g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vec hi = x, lo = x;
    hi[i] += step;
    lo[i] -= step;
    g[i] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

inline double max_rel_error(const Vec& analytic, const Vec& numeric) {
  double worst = 0.0;
  for (int i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) /
                                (std::abs(analytic[i]) + 1e-8));
  return worst;
}

// -- scalar proof-side formulas (independent of the matrix-form code) --------

/// lambda'_k = max_j { lambda_j : w_j xi_jk > 0 }, 0 when the set is empty.
inline Vec scalar_lambda_out(const Vec& lambda, const Vec& w, const Mat& xi) {
  Vec out = Vec::Zero(xi.cols());
  for (int k = 0; k < xi.cols(); ++k) {
    double best = 0.0;
    bool any = false;
    for (int j = 0; j < xi.rows(); ++j) {
      if (w[j] * xi(j, k) <= 0.0) continue;
      if (!any || lambda[j] > best) best = lambda[j];
      any = true;
    }
    out[k] = any ? best : 0.0;
  }
  return out;
}

/// alpha_k = sum_j w_j lambda_j xi_jk.
inline Vec scalar_alpha(const Vec& lambda, const Vec& w, const Mat& xi) {
  Vec alpha = Vec::Zero(xi.cols());
  for (int k = 0; k < xi.cols(); ++k)
    for (int j = 0; j < xi.rows(); ++j)
      alpha[k] += w[j] * lambda[j] * xi(j, k);
  return alpha;
}

/// w'_k = alpha_k / lambda'_k (0 when lambda'_k = 0).
inline Vec scalar_w_out(const Vec& lambda, const Vec& w, const Mat& xi) {
  Vec alpha = scalar_alpha(lambda, w, xi);
  Vec lam_out = scalar_lambda_out(lambda, w, xi);
  Vec out = Vec::Zero(xi.cols());
  for (int k = 0; k < xi.cols(); ++k)
    out[k] = lam_out[k] > 0.0 ? alpha[k] / lam_out[k] : 0.0;
  return out;
}

/// beta_jk = w_j lambda_j xi_jk / alpha_k, as a K x m coefficient matrix.
inline Mat scalar_beta(const Vec& lambda, const Vec& w, const Mat& xi) {
  Vec alpha = scalar_alpha(lambda, w, xi);
  Mat beta = Mat::Zero(xi.cols(), xi.rows());
  for (int k = 0; k < xi.cols(); ++k) {
    if (alpha[k] <= 0.0) continue;
    for (int j = 0; j < xi.rows(); ++j)
      beta(k, j) = w[j] * lambda[j] * xi(j, k) / alpha[k];
  }
  return beta;
}

// -- random valid reparameterization instances --------------------------------

struct Instance {
  Vec w;       // m, entries in (0,1), sum < 1
  Vec lambda;  // m, entries in [0,1]
  Mat xi;      // m x K, rows sum to 1
  Mat pi;      // m x A, rows are action distributions
};

inline Instance random_instance(Rng& rng, int m, int k, int actions) {
  Instance inst;
  inst.w = Vec(m);
  double budget = 0.95;
  for (int j = 0; j < m; ++j) {
    inst.w[j] = rng.uniform(0.05, budget / m);
  }
  inst.lambda = Vec(m);
  for (int j = 0; j < m; ++j) inst.lambda[j] = rng.uniform();
  inst.xi = Mat(m, k);
  for (int j = 0; j < m; ++j) {
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
      inst.xi(j, c) = rng.uniform(0.01, 1.0);
      total += inst.xi(j, c);
    }
    inst.xi.row(j) /= total;
  }
  inst.pi = Mat(m, actions);
  for (int j = 0; j < m; ++j) {
    double total = 0.0;
    for (int a = 0; a < actions; ++a) {
      inst.pi(j, a) = rng.uniform(0.01, 1.0);
      total += inst.pi(j, a);
    }
    inst.pi.row(j) /= total;
  }
  return inst;
}

}  // namespace oracles

#endif  // LEARNSAM_TESTS_ORACLES_HPP_
