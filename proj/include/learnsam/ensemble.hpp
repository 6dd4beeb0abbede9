#ifndef LEARNSAM_ENSEMBLE_HPP_
#define LEARNSAM_ENSEMBLE_HPP_

#include <memory>
#include <set>
#include <utility>
#include <vector>

#include "learnsam/expert.hpp"
#include "learnsam/lambda.hpp"
#include "learnsam/policy.hpp"

namespace learnsam {

/// Expert weights live on logits: K expert slots plus one slot absorbing the
/// expert-free share, normalized together. That gives w_k in (0,1) and
/// sum w_k < 1 by construction for any logit values.
struct WeightLogits {
  Vec u;  // length K+1, last entry is the expert-free slot

  explicit WeightLogits(int n_experts) : u(Vec::Zero(n_experts + 1)) {}

  int expert_count() const { return static_cast<int>(u.size()) - 1; }

  Vec shares() const { return softmax(u); }  // all K+1 slots

  Vec weights() const { return shares().head(expert_count()); }

  /// Inverse map: reproduce target weights (sum < 1 required), pinning the
  /// expert-free logit at zero to fix the softmax shift freedom.
  static WeightLogits from_weights(const Vec& w) {
    double free_share = 1.0 - w.sum();
    if (free_share <= 0.0)
      throw std::invalid_argument("expert weights must sum below 1");
    WeightLogits logits(static_cast<int>(w.size()));
    for (int i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0)
        throw std::invalid_argument("expert weights must be positive");
      logits.u[i] = std::log(w[i]) - std::log(free_share);
    }
    logits.u[w.size()] = 0.0;
    return logits;
  }
};

/// The acting policy: a trainable expert-free policy mixed with frozen,
/// lambda-localized experts,
///   pi(a|s) = (1 - sum_k lambda_k(s) w_k) pi_theta(a|s)
///             + sum_k lambda_k(s) w_k pi_k(a|s).
///
/// Experts are held as mixtures over the original pre-trained policies
/// (coefficient rows of `coeffs`), so split-and-merge applications compose
/// as exact linear maps instead of touching any network. `eligibility`
/// tracks which originals back each expert (the support-union rule), which
/// is what lambda_value maximizes over.
///
/// Trainable parameters seen by the optimizer: the expert-free policy's
/// parameters followed by the weight logits. Expert parameters are frozen
/// and contribute no gradient coordinates.
class EnsemblePolicy : public DifferentiablePolicy {
 public:
  EnsemblePolicy(std::unique_ptr<DifferentiablePolicy> free_policy,
                 std::vector<ExpertPolicy> originals,
                 std::vector<std::shared_ptr<const LambdaEvaluator>> lambdas)
      : free_(std::move(free_policy)),
        originals_(std::make_shared<std::vector<ExpertPolicy>>(
            std::move(originals))),
        lambdas_(std::move(lambdas)),
        logits_(static_cast<int>(originals_->size())) {
    const int m = static_cast<int>(originals_->size());
    if (static_cast<int>(lambdas_.size()) != m)
      throw DimensionError("one lambda evaluator per expert required");
    coeffs_ = Mat::Identity(m, m);
    elig_ = Eigen::MatrixXi::Identity(m, m);
  }

  EnsemblePolicy(const EnsemblePolicy& other)
      : free_(other.free_->clone()),
        originals_(other.originals_),
        lambdas_(other.lambdas_),
        coeffs_(other.coeffs_),
        elig_(other.elig_),
        logits_(other.logits_) {}

  EnsemblePolicy& operator=(const EnsemblePolicy& other) {
    if (this != &other) {
      free_ = other.free_->clone();
      originals_ = other.originals_;
      lambdas_ = other.lambdas_;
      coeffs_ = other.coeffs_;
      elig_ = other.elig_;
      logits_ = other.logits_;
    }
    return *this;
  }

  // -- structure accessors ------------------------------------------------

  int expert_count() const { return static_cast<int>(coeffs_.rows()); }
  int original_count() const { return static_cast<int>(originals_->size()); }
  const Mat& expert_coeffs() const { return coeffs_; }
  const Eigen::MatrixXi& eligibility() const { return elig_; }
  const WeightLogits& logits() const { return logits_; }
  const DifferentiablePolicy& free_policy() const { return *free_; }
  const std::vector<ExpertPolicy>& originals() const { return *originals_; }
  const std::vector<std::shared_ptr<const LambdaEvaluator>>& lambda_evaluators()
      const {
    return lambdas_;
  }

  Vec expert_weights() const { return logits_.weights(); }

  void set_logits(const WeightLogits& logits) {
    if (logits.expert_count() != expert_count())
      throw DimensionError("logit count must match expert count");
    logits_ = logits;
  }

  /// Replaces the expert bank (used by split-and-merge): new mixture rows,
  /// eligibility rows, and weights, all over the same originals.
  void reparameterize(const Mat& coeffs, const Eigen::MatrixXi& elig,
                      const Vec& weights) {
    if (coeffs.cols() != static_cast<int>(originals_->size()) ||
        elig.rows() != coeffs.rows() || elig.cols() != coeffs.cols() ||
        weights.size() != coeffs.rows())
      throw DimensionError("reparameterization shape mismatch");
    coeffs_ = coeffs;
    elig_ = elig;
    logits_ = WeightLogits::from_weights(weights);
  }

  /// lambda of expert k: the max over the eligible originals' evaluators,
  /// which by the closure identity equals the evaluator over the unioned
  /// support. Empty eligibility gives 0.
  double lambda_value(int k, const Vec& s) const {
    double best = 0.0;
    bool any = false;
    for (int j = 0; j < elig_.cols(); ++j) {
      if (!elig_(k, j)) continue;
      any = true;
      double v = lambdas_[j] ? lambdas_[j]->eval(s) : 1.0;
      if (v > best) best = v;
    }
    return any ? best : 0.0;
  }

  /// Support states backing expert k (union over eligible originals).
  std::vector<Vec> support_states(int k) const {
    std::vector<Vec> out;
    for (int j = 0; j < elig_.cols(); ++j) {
      if (!elig_(k, j) || !lambdas_[j]) continue;
      const auto& sup = lambdas_[j]->support();
      out.insert(out.end(), sup.begin(), sup.end());
    }
    return out;
  }

  /// Mixture coefficients at s: K expert entries then the expert-free one.
  /// Entries lie in [0,1] and sum to 1.
  Vec mixture_coeffs(const Vec& s) const {
    const int k = expert_count();
    Vec w = expert_weights();
    Vec c(k + 1);
    double total = 0.0;
    for (int i = 0; i < k; ++i) {
      c[i] = lambda_value(i, s) * w[i];
      total += c[i];
    }
    c[k] = 1.0 - total;
    return c;
  }

  double expert_free_coefficient(const Vec& s) const {
    return mixture_coeffs(s)[expert_count()];
  }

  double expert_prob(int k, const Vec& s, const ActionValue& a) const {
    double p = 0.0;
    for (int j = 0; j < coeffs_.cols(); ++j)
      if (coeffs_(k, j) != 0.0) p += coeffs_(k, j) * (*originals_)[j].prob(s, a);
    return p;
  }

  Vec expert_action_probs(int k, const Vec& s) const {
    Vec p = Vec::Zero(action_count());
    for (int j = 0; j < coeffs_.cols(); ++j)
      if (coeffs_(k, j) != 0.0)
        p += coeffs_(k, j) * (*originals_)[j].action_probs(s);
    return p;
  }

  ActionValue expert_sample(int k, const Vec& s, Rng& rng) const {
    double v = rng.uniform(), acc = 0.0;
    for (int j = 0; j < coeffs_.cols(); ++j) {
      acc += coeffs_(k, j);
      if (v < acc) return (*originals_)[j].sample(s, rng);
    }
    for (int j = coeffs_.cols() - 1; j >= 0; --j)
      if (coeffs_(k, j) > 0.0) return (*originals_)[j].sample(s, rng);
    throw std::logic_error("empty expert mixture");
  }

  double prob(const Vec& s, const ActionValue& a) const {
    Vec c = mixture_coeffs(s);
    double p = c[expert_count()] * std::exp(free_->log_prob(s, a));
    for (int k = 0; k < expert_count(); ++k)
      if (c[k] > 0.0) p += c[k] * expert_prob(k, s, a);
    return p;
  }

  // -- DifferentiablePolicy -----------------------------------------------

  bool discrete() const override { return free_->discrete(); }
  int action_count() const override { return free_->action_count(); }

  int param_count() const override {
    return free_->param_count() + static_cast<int>(logits_.u.size());
  }

  Vec trainable_params() const override {
    Vec p(param_count());
    p << free_->trainable_params(), logits_.u;
    return p;
  }

  void set_trainable_params(const Vec& p) override {
    if (p.size() != param_count()) throw DimensionError("ensemble params");
    free_->set_trainable_params(p.head(free_->param_count()));
    logits_.u = p.tail(logits_.u.size());
  }

  double log_prob(const Vec& s, const ActionValue& a) const override {
    double p = prob(s, a);
    if (!(p > 0.0)) throw ZeroProbabilityError("zero-probability action");
    return std::log(p);
  }

  Vec log_prob_grad(const Vec& s, const ActionValue& a,
                    double* logp = nullptr) const override {
    const int k = expert_count();
    const int nf = free_->param_count();
    double lp_free = 0.0;
    Vec g_free = free_->log_prob_grad(s, a, &lp_free);
    double p_free = std::exp(lp_free);

    Vec shares = logits_.shares();  // K+1
    Vec lam(k), p_exp(k);
    double mix = 0.0, coeff_sum = 0.0;
    for (int i = 0; i < k; ++i) {
      lam[i] = lambda_value(i, s);
      p_exp[i] = lam[i] > 0.0 ? expert_prob(i, s, a) : 0.0;
      coeff_sum += lam[i] * shares[i];
      mix += lam[i] * shares[i] * p_exp[i];
    }
    double c_free = 1.0 - coeff_sum;
    double pi = c_free * p_free + mix;
    if (!(pi > 0.0)) throw ZeroProbabilityError("zero-probability action");
    if (logp) *logp = std::log(pi);

    Vec grad(param_count());
    grad.head(nf) = (c_free * p_free / pi) * g_free;

    // d pi / d share_i, then through the softmax Jacobian of the logits
    Vec dpi_dshare = Vec::Zero(k + 1);
    for (int i = 0; i < k; ++i) dpi_dshare[i] = lam[i] * (p_exp[i] - p_free);
    double dot = dpi_dshare.dot(shares);
    for (int l = 0; l <= k; ++l)
      grad[nf + l] = shares[l] * (dpi_dshare[l] - dot) / pi;
    return grad;
  }

  Vec action_probs(const Vec& s) const override {
    Vec c = mixture_coeffs(s);
    Vec p = c[expert_count()] * free_->action_probs(s);
    for (int k = 0; k < expert_count(); ++k) {
      if (c[k] <= 0.0) continue;
      for (int j = 0; j < coeffs_.cols(); ++j)
        if (coeffs_(k, j) != 0.0)
          p += c[k] * coeffs_(k, j) * (*originals_)[j].action_probs(s);
    }
    return p;
  }

  ActionValue sample(const Vec& s, Rng& rng) const override {
    Vec c = mixture_coeffs(s);
    double u = rng.uniform(), acc = 0.0;
    for (int k = 0; k < expert_count(); ++k) {
      acc += c[k];
      if (u < acc) {
        // expert k: pick an original by its mixture row, then sample it
        double v = rng.uniform(), acc2 = 0.0;
        int pick = -1;
        for (int j = 0; j < coeffs_.cols(); ++j) {
          acc2 += coeffs_(k, j);
          if (v < acc2) {
            pick = j;
            break;
          }
        }
        if (pick < 0)
          for (int j = coeffs_.cols() - 1; j >= 0; --j)
            if (coeffs_(k, j) > 0.0) {
              pick = j;
              break;
            }
        return (*originals_)[pick].sample(s, rng);
      }
    }
    return free_->sample(s, rng);
  }

  ActionValue mode(const Vec& s) const override {
    if (discrete()) {
      Vec p = action_probs(s);
      int best = 0;
      p.maxCoeff(&best);
      return ActionValue::of_index(best);
    }
    // mixture mean
    Vec c = mixture_coeffs(s);
    Vec m = c[expert_count()] * free_->mode(s).vector;
    for (int k = 0; k < expert_count(); ++k) {
      if (c[k] <= 0.0) continue;
      for (int j = 0; j < coeffs_.cols(); ++j)
        if (coeffs_(k, j) != 0.0)
          m += c[k] * coeffs_(k, j) * (*originals_)[j].mean(s);
    }
    return ActionValue::of_vector(std::move(m));
  }

  std::unique_ptr<DifferentiablePolicy> clone() const override {
    return std::make_unique<EnsemblePolicy>(*this);
  }

 private:
  std::unique_ptr<DifferentiablePolicy> free_;
  std::shared_ptr<std::vector<ExpertPolicy>> originals_;
  std::vector<std::shared_ptr<const LambdaEvaluator>> lambdas_;
  Mat coeffs_;             // experts x originals, rows sum to 1
  Eigen::MatrixXi elig_;   // experts x originals, support-union membership
  WeightLogits logits_;
};

}  // namespace learnsam

#endif  // LEARNSAM_ENSEMBLE_HPP_
