#ifndef LEARNSAM_SAM_HPP_
#define LEARNSAM_SAM_HPP_

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "learnsam/ensemble.hpp"

namespace learnsam {

/// Hyperparameters of the score-to-category grouping.
struct GroupingConfig {
  enum class Kind { softmax, normal_cdf };
  Kind kind = Kind::softmax;
  double c = 4.0;
  /// softmax: K oracle scores, strictly increasing (higher = more helpful).
  /// normal_cdf: K-1 strictly increasing cutoffs (implicit -inf / +inf ends).
  Vec b;
  int k = 2;

  void validate() const {
    if (k < 2) throw ConfigError("grouping needs K >= 2 categories");
    if (c <= 0) throw ConfigError("grouping sharpness c must be positive");
    int expect = kind == Kind::softmax ? k : k - 1;
    if (static_cast<int>(b.size()) != expect)
      throw ConfigError("grouping has wrong number of b values");
    for (int i = 1; i < b.size(); ++i)
      if (b[i] <= b[i - 1])
        throw ConfigError("grouping b values must be strictly increasing");
  }

  static GroupingConfig softmax(double c, Vec b) {
    GroupingConfig g;
    g.kind = Kind::softmax;
    g.c = c;
    g.k = static_cast<int>(b.size());
    g.b = std::move(b);
    g.validate();
    return g;
  }
  static GroupingConfig normal_cdf(double c, Vec cutoffs) {
    GroupingConfig g;
    g.kind = Kind::normal_cdf;
    g.c = c;
    g.k = static_cast<int>(cutoffs.size()) + 1;
    g.b = std::move(cutoffs);
    g.validate();
    return g;
  }
};

// -- scoring ----------------------------------------------------------------

constexpr double kValueClampFloor = 1e-6;

/// Expert score at one state from enumerated Q-values (discrete path):
///   psi = sum_a A(s,a) pi_expert(a|s) / |V(s)|,
/// with V(s) = sum_a pi_acting(a|s) Q(s,a) and A = Q - V. Near-zero V is
/// clamped to 1e-6 in magnitude and flagged.
inline double score_from_q(const Vec& q, const Vec& acting_probs,
                           const Vec& expert_probs, bool* clamped = nullptr) {
  double v = acting_probs.dot(q);
  Vec advantage = q.array() - v;
  double scale = std::abs(v);
  if (scale < kValueClampFloor) {
    scale = kValueClampFloor;
    if (clamped) *clamped = true;
  }
  return advantage.dot(expert_probs) / scale;
}

/// Monte Carlo form for continuous actions: Q-values of actions sampled
/// from the expert and from the acting policy.
inline double score_mc(const Vec& q_expert_samples, const Vec& q_acting_samples,
                       bool* clamped = nullptr) {
  double v = q_acting_samples.mean();
  double scale = std::abs(v);
  if (scale < kValueClampFloor) {
    scale = kValueClampFloor;
    if (clamped) *clamped = true;
  }
  return (q_expert_samples.array() - v).mean() / scale;
}

// -- grouping ----------------------------------------------------------------

inline Vec group_softmax(double psi, const GroupingConfig& cfg) {
  if (cfg.kind != GroupingConfig::Kind::softmax)
    throw ConfigError("softmax grouping requested with non-softmax config");
  Vec e = -cfg.c * (psi - cfg.b.array()).abs();
  double m = e.maxCoeff();
  Vec x = (e.array() - m).exp();
  return x / x.sum();
}

inline double normal_cdf_value(double z) {
  return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

inline Vec group_cdf(double psi, const GroupingConfig& cfg) {
  if (cfg.kind != GroupingConfig::Kind::normal_cdf)
    throw ConfigError("normal_cdf grouping requested with non-cdf config");
  // successive differences of the normal CDF centred at psi, sd = 1/c;
  // the last bin is 1 minus the running sum so rows total exactly 1
  Vec xi(cfg.k);
  double prev = 0.0, running = 0.0;
  for (int i = 0; i + 1 < cfg.k; ++i) {
    double cdf = normal_cdf_value((cfg.b[i] - psi) * cfg.c);
    xi[i] = std::max(cdf - prev, 0.0);
    prev = cdf;
    running += xi[i];
  }
  xi[cfg.k - 1] = std::max(1.0 - running, 0.0);
  return xi;
}

inline Vec group(double psi, const GroupingConfig& cfg) {
  return cfg.kind == GroupingConfig::Kind::softmax ? group_softmax(psi, cfg)
                                                   : group_cdf(psi, cfg);
}

/// One grouping row per expert: Xi is m x K.
inline Mat grouping_matrix(const Vec& psi, const GroupingConfig& cfg) {
  Mat xi(psi.size(), cfg.k);
  for (int j = 0; j < psi.size(); ++j) xi.row(j) = group(psi[j], cfg).transpose();
  return xi;
}

// -- reparameterization matrices ---------------------------------------------

/// Selector M (K x m) placing a single 1 per row k at the eligible expert
/// with the largest lambda (eligible: w_j xi_jk > 0; smallest index wins
/// ties). M lambda then reproduces the max construction of the latent
/// lambda exactly. A row with no eligible expert stays all-zero and is
/// reported through empty_row.
inline Mat build_selector(const Vec& lambda_in, const Vec& w_in, const Mat& xi,
                          bool* empty_row = nullptr) {
  const int m = static_cast<int>(xi.rows());
  const int k = static_cast<int>(xi.cols());
  if (lambda_in.size() != m || w_in.size() != m)
    throw DimensionError("selector input sizes disagree");
  Mat sel = Mat::Zero(k, m);
  if (empty_row) *empty_row = false;
  for (int row = 0; row < k; ++row) {
    int best = -1;
    for (int j = 0; j < m; ++j) {
      if (w_in[j] * xi(j, row) <= 0.0) continue;
      if (best < 0 || lambda_in[j] > lambda_in[best]) best = j;
    }
    if (best >= 0)
      sel(row, best) = 1.0;
    else if (empty_row)
      *empty_row = true;
  }
  return sel;
}

/// lambda' = M lambda.
inline Vec repar_lambda(const Mat& selector, const Vec& lambda_in) {
  if (selector.cols() != lambda_in.size())
    throw DimensionError("selector/lambda shape mismatch");
  return selector * lambda_in;
}

/// w' = (Xi^T (elementwise*) ((1 (elementwise/) lambda') lambda^T)) w.
/// Rows whose lambda' is zero (possible only with empty eligibility) give
/// w'_k = 0 rather than dividing by zero.
inline Vec repar_weights(const Mat& xi, const Vec& lambda_in,
                         const Vec& lambda_out, const Vec& w_in) {
  const int m = static_cast<int>(xi.rows());
  const int k = static_cast<int>(xi.cols());
  if (lambda_in.size() != m || w_in.size() != m || lambda_out.size() != k)
    throw DimensionError("weight reparameterization shape mismatch");
  Vec inv_out(k);
  for (int i = 0; i < k; ++i)
    inv_out[i] = lambda_out[i] > 0.0 ? 1.0 / lambda_out[i] : 0.0;
  Mat scaled = xi.transpose().array() * (inv_out * lambda_in.transpose()).array();
  return scaled * w_in;
}

/// pi' = ([(w . lambda)(1 (elementwise/) ((w . lambda)^T Xi))] (elementwise*) Xi)^T pi:
/// returns the K x m coefficient matrix whose row k holds beta_{.k}, the
/// mixture of the m input policies forming latent expert k. Categories with
/// zero total mass get an all-zero row (flagged downstream).
inline Mat repar_policy_coeffs(const Mat& xi, const Vec& lambda_in,
                               const Vec& w_in) {
  const int m = static_cast<int>(xi.rows());
  if (lambda_in.size() != m || w_in.size() != m)
    throw DimensionError("policy reparameterization shape mismatch");
  Vec wl = w_in.cwiseProduct(lambda_in);
  Vec alpha = xi.transpose() * wl;  // K
  Vec inv_alpha(alpha.size());
  for (int i = 0; i < alpha.size(); ++i)
    inv_alpha[i] = alpha[i] > 0.0 ? 1.0 / alpha[i] : 0.0;
  Mat beta = (wl * inv_alpha.transpose()).array() * xi.array();  // m x K
  return beta.transpose();
}

/// Max absolute deviation of the ensemble identity
///   sum_j w_j lambda_j pi_j(a) = sum_k w'_k lambda'_k pi'_k(a)
/// over the action axis; policies given as rows of action distributions.
inline double invariance_max_dev(const Vec& w, const Vec& lambda,
                                 const Mat& pi, const Vec& w_out,
                                 const Vec& lambda_out, const Mat& pi_out) {
  Vec lhs = pi.transpose() * w.cwiseProduct(lambda);
  Vec rhs = pi_out.transpose() * w_out.cwiseProduct(lambda_out);
  return (lhs - rhs).cwiseAbs().maxCoeff();
}

// -- one split-and-merge application -----------------------------------------

/// Everything one application computes, kept for audit and testing.
struct SamState {
  Vec psi;            // aggregated expert scores (length m)
  Mat xi;             // m x K grouping matrix
  Mat selector;       // K x m
  Vec lambda_in;      // aggregated lambda per input expert
  Vec w_in;           // input weights
  Vec lambda_out;     // K
  Vec w_out;          // K
  Mat policy_coeffs;  // K x m latent mixtures over the input experts
  std::vector<int> flagged;  // latent indices with empty mixtures
};

/// The three linear maps applied to a given grouping matrix.
inline SamState sam_plan_from_xi(const Mat& xi, const Vec& lambda_in,
                                 const Vec& w_in) {
  SamState st;
  st.lambda_in = lambda_in;
  st.w_in = w_in;
  st.xi = xi;
  st.selector = build_selector(lambda_in, w_in, xi);
  st.lambda_out = repar_lambda(st.selector, lambda_in);
  st.w_out = repar_weights(xi, lambda_in, st.lambda_out, w_in);
  st.policy_coeffs = repar_policy_coeffs(xi, lambda_in, w_in);
  for (int k = 0; k < xi.cols(); ++k)
    if (!(st.w_out[k] > 0.0) || st.policy_coeffs.row(k).sum() <= 0.0)
      st.flagged.push_back(k);
  return st;
}

inline SamState sam_plan(const Vec& psi, const Vec& lambda_in, const Vec& w_in,
                         const GroupingConfig& cfg) {
  cfg.validate();
  SamState st = sam_plan_from_xi(grouping_matrix(psi, cfg), lambda_in, w_in);
  st.psi = psi;
  return st;
}

struct SamApplyResult {
  EnsemblePolicy ensemble;
  SamState state;
  double invariance_dev = 0.0;  // measured on probes (0 when none given)
  int dropped_count = 0;        // latent experts removed this application
};

/// Expert-side mixture value sum_k w_k lambda_k(s) pi_k(a|s) of an ensemble;
/// this is the quantity the reparameterization must preserve.
inline double expert_side_value(const EnsemblePolicy& ens, const Vec& s,
                                const ActionValue& a) {
  Vec w = ens.expert_weights();
  double total = 0.0;
  for (int k = 0; k < ens.expert_count(); ++k) {
    double lam = ens.lambda_value(k, s);
    if (lam > 0.0 && w[k] > 0.0) total += w[k] * lam * ens.expert_prob(k, s, a);
  }
  return total;
}

/// Rebuilds the ensemble from a planned reparameterization: latent mixture
/// rows are composed onto the original experts, eligibility follows the
/// support-union rule, and the new weights are re-embedded into the logits.
/// Flagged (empty) latents are removed; with drop_unhelpful the
/// lowest-category latent is removed as well and its weight mass is left to
/// the expert-free policy. The identity deviation over the probe pairs is
/// measured against the rebuilt ensemble and reported, not asserted.
inline SamApplyResult sam_commit(
    const EnsemblePolicy& ens, const SamState& st, bool drop_unhelpful,
    const std::vector<std::pair<Vec, ActionValue>>& probes = {}) {
  const int m = ens.expert_count();
  const int n_latent = static_cast<int>(st.policy_coeffs.rows());
  if (st.xi.rows() != m)
    throw DimensionError("sam state does not match the ensemble");

  // carry latent structure through to the original expert policies
  Mat coeffs_new = st.policy_coeffs * ens.expert_coeffs();
  Eigen::MatrixXi elig_new =
      Eigen::MatrixXi::Zero(n_latent, ens.original_count());
  for (int k = 0; k < n_latent; ++k)
    for (int i = 0; i < m; ++i)
      if (st.w_in[i] * st.xi(i, k) > 0.0)
        for (int j = 0; j < ens.original_count(); ++j)
          if (ens.eligibility()(i, j)) elig_new(k, j) = 1;

  // keep latent experts that are non-empty and, when dropping, not in the
  // lowest helpfulness category (index 0)
  std::vector<int> keep;
  for (int k = 0; k < n_latent; ++k) {
    bool flagged = std::find(st.flagged.begin(), st.flagged.end(), k) !=
                   st.flagged.end();
    if (flagged) continue;
    if (drop_unhelpful && k == 0) continue;
    keep.push_back(k);
  }

  SamApplyResult result{ens, st, 0.0,
                        n_latent - static_cast<int>(keep.size())};
  Mat coeffs(keep.size(), ens.original_count());
  Eigen::MatrixXi elig(keep.size(), ens.original_count());
  Vec w(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    coeffs.row(i) = coeffs_new.row(keep[i]);
    elig.row(i) = elig_new.row(keep[i]);
    w[i] = st.w_out[keep[i]];
  }
  result.ensemble.reparameterize(coeffs, elig, w);

  double dev = 0.0;
  for (const auto& [s, a] : probes)
    dev = std::max(dev, std::abs(expert_side_value(ens, s, a) -
                                 expert_side_value(result.ensemble, s, a)));
  result.invariance_dev = dev;
  return result;
}

/// One full split-and-merge application from aggregated scores.
inline SamApplyResult sam_apply(
    const EnsemblePolicy& ens, const Vec& psi_bar, const Vec& lambda_bar,
    const GroupingConfig& cfg, bool drop_unhelpful,
    const std::vector<std::pair<Vec, ActionValue>>& probes = {}) {
  if (psi_bar.size() != ens.expert_count() ||
      lambda_bar.size() != ens.expert_count())
    throw DimensionError("sam_apply aggregate sizes disagree");
  SamState st = sam_plan(psi_bar, lambda_bar, ens.expert_weights(), cfg);
  return sam_commit(ens, st, drop_unhelpful, probes);
}

}  // namespace learnsam

#endif  // LEARNSAM_SAM_HPP_
