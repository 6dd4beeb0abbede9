#ifndef LEARNSAM_POLICY_HPP_
#define LEARNSAM_POLICY_HPP_

#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "learnsam/mdp.hpp"
#include "learnsam/mlp.hpp"

namespace learnsam {

class ZeroProbabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A stochastic policy whose log-density is exactly differentiable in its
/// trainable parameters. The trust-region optimizer only sees this surface,
/// so test policies and the ensemble are interchangeable there.
class DifferentiablePolicy {
 public:
  virtual ~DifferentiablePolicy() = default;

  virtual bool discrete() const = 0;
  /// Number of actions (discrete) or action dimension (continuous).
  virtual int action_count() const = 0;

  virtual int param_count() const = 0;
  virtual Vec trainable_params() const = 0;
  virtual void set_trainable_params(const Vec& p) = 0;

  virtual double log_prob(const Vec& s, const ActionValue& a) const = 0;
  /// Exact gradient of log_prob with respect to the trainable parameters.
  virtual Vec log_prob_grad(const Vec& s, const ActionValue& a,
                            double* logp = nullptr) const = 0;

  virtual ActionValue sample(const Vec& s, Rng& rng) const = 0;
  /// Deterministic action for evaluation: argmax (discrete) or mean.
  virtual ActionValue mode(const Vec& s) const = 0;
  /// Full distribution at s; discrete policies only.
  virtual Vec action_probs(const Vec& s) const {
    throw std::logic_error("action_probs on a continuous policy");
  }

  virtual std::unique_ptr<DifferentiablePolicy> clone() const = 0;

  SamplingPolicy sampler() const {
    return [this](const StateVector& s, Rng& rng) { return sample(s, rng); };
  }
};

/// Affine state normalization shared by the MLP policies and the value net:
/// maps the environment's state box onto [-1, 1] so tanh layers stay in
/// their responsive range.
struct StateScaler {
  Vec shift, scale;  // x_norm = (x - shift) .* scale

  static StateScaler from_bounds(const Vec& low, const Vec& high) {
    StateScaler sc;
    sc.shift = 0.5 * (low + high);
    sc.scale = Vec(low.size());
    for (int i = 0; i < low.size(); ++i) {
      double half = 0.5 * (high[i] - low[i]);
      sc.scale[i] = half > 0 ? 1.0 / half : 1.0;
    }
    return sc;
  }
  static StateScaler identity(int dim) {
    StateScaler sc;
    sc.shift = Vec::Zero(dim);
    sc.scale = Vec::Ones(dim);
    return sc;
  }
  Vec apply(const Vec& x) const {
    return (x - shift).cwiseProduct(scale);
  }
};

inline double log_sum_exp(const Vec& z) {
  double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

inline Vec softmax(const Vec& z) {
  Vec e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

/// Softmax policy over a small discrete action set, logits from an MLP.
class CategoricalMlpPolicy : public DifferentiablePolicy {
 public:
  CategoricalMlpPolicy(int state_dim, const std::vector<int>& hidden,
                       int n_actions, StateScaler scaler, Rng& rng)
      : mlp_(state_dim, hidden, n_actions), scaler_(std::move(scaler)) {
    mlp_.init(rng);
  }

  bool discrete() const override { return true; }
  int action_count() const override { return mlp_.output_dim(); }
  int param_count() const override { return mlp_.param_count(); }
  Vec trainable_params() const override { return mlp_.params(); }
  void set_trainable_params(const Vec& p) override { mlp_.set_params(p); }

  Vec action_probs(const Vec& s) const override {
    return softmax(mlp_.forward(scaler_.apply(s)));
  }

  double log_prob(const Vec& s, const ActionValue& a) const override {
    Vec z = mlp_.forward(scaler_.apply(s));
    return z[a.index] - log_sum_exp(z);
  }

  Vec log_prob_grad(const Vec& s, const ActionValue& a,
                    double* logp = nullptr) const override {
    Mlp::Trace tr;
    Vec z = mlp_.forward(scaler_.apply(s), tr);
    Vec p = softmax(z);
    if (logp) *logp = z[a.index] - log_sum_exp(z);
    Vec dz = -p;
    dz[a.index] += 1.0;
    Vec grad = Vec::Zero(mlp_.param_count());
    mlp_.backward(tr, dz, grad);
    return grad;
  }

  ActionValue sample(const Vec& s, Rng& rng) const override {
    Vec p = action_probs(s);
    double u = rng.uniform();
    double acc = 0.0;
    for (int i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return ActionValue::of_index(i);
    }
    return ActionValue::of_index(static_cast<int>(p.size()) - 1);
  }

  ActionValue mode(const Vec& s) const override {
    Vec p = action_probs(s);
    int best = 0;
    p.maxCoeff(&best);
    return ActionValue::of_index(best);
  }

  std::unique_ptr<DifferentiablePolicy> clone() const override {
    return std::make_unique<CategoricalMlpPolicy>(*this);
  }

  const Mlp& mlp() const { return mlp_; }
  const StateScaler& scaler() const { return scaler_; }

 private:
  Mlp mlp_;
  StateScaler scaler_;
};

/// Diagonal Gaussian with MLP mean and a state-independent learnable
/// log standard deviation appended to the flat parameter vector.
class GaussianMlpPolicy : public DifferentiablePolicy {
 public:
  GaussianMlpPolicy(int state_dim, const std::vector<int>& hidden,
                    int action_dim, StateScaler scaler, Rng& rng,
                    double init_log_sigma = std::log(0.5))
      : mlp_(state_dim, hidden, action_dim),
        log_sigma_(Vec::Constant(action_dim, init_log_sigma)),
        scaler_(std::move(scaler)) {
    mlp_.init(rng);
  }

  bool discrete() const override { return false; }
  int action_count() const override { return mlp_.output_dim(); }
  int param_count() const override {
    return mlp_.param_count() + static_cast<int>(log_sigma_.size());
  }

  Vec trainable_params() const override {
    Vec p(param_count());
    p << mlp_.params(), log_sigma_;
    return p;
  }
  void set_trainable_params(const Vec& p) override {
    if (p.size() != param_count()) throw DimensionError("policy params");
    mlp_.set_params(p.head(mlp_.param_count()));
    log_sigma_ = p.tail(log_sigma_.size());
  }

  Vec mean(const Vec& s) const { return mlp_.forward(scaler_.apply(s)); }
  Vec sigma() const { return log_sigma_.array().exp(); }

  double log_prob(const Vec& s, const ActionValue& a) const override {
    return gaussian_logp(a.vector, mean(s));
  }

  Vec log_prob_grad(const Vec& s, const ActionValue& a,
                    double* logp = nullptr) const override {
    Mlp::Trace tr;
    Vec mu = mlp_.forward(scaler_.apply(s), tr);
    if (logp) *logp = gaussian_logp(a.vector, mu);
    Vec sig = sigma();
    Vec z = (a.vector - mu).cwiseQuotient(sig);
    Vec dmu = z.cwiseQuotient(sig);
    Vec grad = Vec::Zero(param_count());
    mlp_.backward(tr, dmu, grad.head(mlp_.param_count()));
    grad.tail(log_sigma_.size()) = z.array().square() - 1.0;
    return grad;
  }

  ActionValue sample(const Vec& s, Rng& rng) const override {
    Vec mu = mean(s);
    Vec sig = sigma();
    Vec a(mu.size());
    for (int i = 0; i < mu.size(); ++i) a[i] = mu[i] + sig[i] * rng.normal();
    return ActionValue::of_vector(std::move(a));
  }

  ActionValue mode(const Vec& s) const override {
    return ActionValue::of_vector(mean(s));
  }

  std::unique_ptr<DifferentiablePolicy> clone() const override {
    return std::make_unique<GaussianMlpPolicy>(*this);
  }

  const Mlp& mlp() const { return mlp_; }
  const StateScaler& scaler() const { return scaler_; }

 private:
  double gaussian_logp(const Vec& a, const Vec& mu) const {
    Vec sig = sigma();
    double lp = 0.0;
    for (int i = 0; i < a.size(); ++i) {
      double z = (a[i] - mu[i]) / sig[i];
      lp += -0.5 * z * z - log_sigma_[i] - 0.5 * std::log(2.0 * M_PI);
    }
    return lp;
  }

  Mlp mlp_;
  Vec log_sigma_;
  StateScaler scaler_;
};

/// Mean KL divergence D_KL(p || q) over a set of states: exact enumeration
/// for discrete policies, Monte Carlo over action samples drawn from p for
/// continuous ones. The sample-taking overload lets the optimizer freeze
/// one set of draws per update so line search is deterministic.
inline double kl_mean(const DifferentiablePolicy& p,
                      const DifferentiablePolicy& q,
                      const std::vector<Vec>& states) {
  if (!p.discrete()) throw std::logic_error("exact KL needs a discrete policy");
  double total = 0.0;
  for (const Vec& s : states) {
    Vec pp = p.action_probs(s), qp = q.action_probs(s);
    double kl = 0.0;
    for (int a = 0; a < pp.size(); ++a)
      if (pp[a] > 0) kl += pp[a] * (std::log(pp[a]) - std::log(qp[a]));
    total += kl;
  }
  return states.empty() ? 0.0 : total / static_cast<double>(states.size());
}

inline double kl_mean(const DifferentiablePolicy& p,
                      const DifferentiablePolicy& q,
                      const std::vector<Vec>& states,
                      const std::vector<std::vector<ActionValue>>& samples) {
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < states.size(); ++i) {
    for (const ActionValue& a : samples[i]) {
      total += p.log_prob(states[i], a) - q.log_prob(states[i], a);
      ++n;
    }
  }
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

inline double kl_mean(const DifferentiablePolicy& p,
                      const DifferentiablePolicy& q,
                      const std::vector<Vec>& states, Rng& rng,
                      int n_samples = 64) {
  if (p.discrete()) return kl_mean(p, q, states);
  std::vector<std::vector<ActionValue>> samples(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    samples[i].reserve(n_samples);
    for (int k = 0; k < n_samples; ++k)
      samples[i].push_back(p.sample(states[i], rng));
  }
  return kl_mean(p, q, states, samples);
}

}  // namespace learnsam

#endif  // LEARNSAM_POLICY_HPP_
