#ifndef LEARNSAM_TRPO_HPP_
#define LEARNSAM_TRPO_HPP_

#include <cmath>
#include <functional>
#include <memory>
#include <vector>

#include "learnsam/policy.hpp"
#include "learnsam/value.hpp"

namespace learnsam {

struct TrustRegionConfig {
  double delta = 0.01;           // mean-KL bound
  int cg_iters = 10;
  double damping = 1e-2;
  double backtrack_coef = 0.8;
  int max_backtracks = 10;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  bool normalize_advantages = true;
  int kl_samples = 64;      // per-state MC draws for continuous KL
  int fisher_samples = 8;   // per-state MC draws for the continuous Fisher
  int fvp_row_budget = 8192;
};

/// Flattened on-policy data for one update. Behaviour log-probabilities are
/// recorded at collection time; the surrogate is importance-weighted
/// against them.
struct StepData {
  std::vector<Vec> states;
  std::vector<ActionValue> actions;
  Vec advantages;
  Vec logp_behavior;

  std::size_t size() const { return states.size(); }
};

inline double surrogate_loss(const DifferentiablePolicy& policy,
                             const StepData& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    double lp = policy.log_prob(data.states[i], data.actions[i]);
    total += std::exp(lp - data.logp_behavior[i]) * data.advantages[i];
  }
  return total / static_cast<double>(data.size());
}

inline Vec surrogate_grad(const DifferentiablePolicy& policy,
                          const StepData& data) {
  Vec grad = Vec::Zero(policy.param_count());
  for (std::size_t i = 0; i < data.size(); ++i) {
    double lp = 0.0;
    Vec g = policy.log_prob_grad(data.states[i], data.actions[i], &lp);
    grad += std::exp(lp - data.logp_behavior[i]) * data.advantages[i] * g;
  }
  return grad / static_cast<double>(data.size());
}

inline Vec conjugate_gradient(const std::function<Vec(const Vec&)>& apply_a,
                              const Vec& b, int iters, double tol = 1e-10) {
  Vec x = Vec::Zero(b.size());
  Vec r = b, p = b;
  double rs = r.squaredNorm();
  for (int i = 0; i < iters && rs > tol; ++i) {
    Vec ap = apply_a(p);
    double alpha = rs / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    double rs_new = r.squaredNorm();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

/// Cached score-function rows for Fisher-vector products:
///   F v = mean_s E_{a~pi(s)} [(g . v) g] + damping v,
/// with the expectation enumerated exactly for discrete policies and taken
/// over frozen samples for continuous ones. Exact at the parameters it was
/// built at, which is where the natural-gradient solve needs it.
class FisherProduct {
 public:
  FisherProduct(const DifferentiablePolicy& policy,
                const std::vector<Vec>& states, const TrustRegionConfig& cfg,
                Rng& rng) {
    const bool disc = policy.discrete();
    const int per_state = disc ? policy.action_count() : cfg.fisher_samples;
    int stride = 1;
    if (static_cast<int>(states.size()) * per_state > cfg.fvp_row_budget) {
      stride = (static_cast<int>(states.size()) * per_state +
                cfg.fvp_row_budget - 1) /
               cfg.fvp_row_budget;
    }
    std::vector<int> selected;
    for (std::size_t i = 0; i < states.size(); i += stride)
      selected.push_back(static_cast<int>(i));
    const int rows = static_cast<int>(selected.size()) * per_state;
    g_ = Mat(rows, policy.param_count());
    weights_ = Vec(rows);
    int r = 0;
    for (int idx : selected) {
      const Vec& s = states[idx];
      if (disc) {
        Vec probs = policy.action_probs(s);
        for (int a = 0; a < per_state; ++a) {
          g_.row(r) = policy.log_prob_grad(s, ActionValue::of_index(a));
          weights_[r] = probs[a];
          ++r;
        }
      } else {
        for (int k = 0; k < per_state; ++k) {
          ActionValue a = policy.sample(s, rng);
          g_.row(r) = policy.log_prob_grad(s, a);
          weights_[r] = 1.0 / per_state;
          ++r;
        }
      }
    }
    n_states_ = static_cast<double>(selected.size());
    damping_ = cfg.damping;
  }

  Vec operator()(const Vec& v) const {
    Vec gv = g_ * v;
    Vec weighted = gv.cwiseProduct(weights_);
    return (g_.transpose() * weighted) / n_states_ + damping_ * v;
  }

 private:
  Mat g_;
  Vec weights_;
  double n_states_ = 1.0;
  double damping_ = 0.0;
};

struct StepReport {
  bool accepted = false;
  double kl = 0.0;
  double surrogate_before = 0.0;
  double surrogate_after = 0.0;
  double step_norm = 0.0;
  int backtracks = 0;
  bool nonfinite_abort = false;
};

/// One trust-region policy update: natural-gradient direction from a
/// conjugate-gradient solve against the Fisher product, scaled to the KL
/// boundary, then a backtracking line search that only accepts steps with
/// surrogate improvement and empirical mean KL within delta. The policy is
/// left untouched when no step qualifies.
inline StepReport trust_region_step(DifferentiablePolicy& policy,
                                    const StepData& data,
                                    const TrustRegionConfig& cfg, Rng& rng) {
  StepReport report;
  report.surrogate_before = surrogate_loss(policy, data);
  report.surrogate_after = report.surrogate_before;

  Vec g = surrogate_grad(policy, data);
  if (!g.allFinite()) {
    report.nonfinite_abort = true;
    return report;
  }
  if (g.cwiseAbs().maxCoeff() < 1e-12) return report;

  FisherProduct fisher(policy, data.states, cfg, rng);
  Vec x = conjugate_gradient([&](const Vec& v) { return fisher(v); }, g,
                             cfg.cg_iters);
  double quad = x.dot(fisher(x));
  if (!(quad > 0.0) || !x.allFinite()) {
    report.nonfinite_abort = !x.allFinite();
    return report;
  }
  Vec full_step = std::sqrt(2.0 * cfg.delta / quad) * x;

  // frozen KL evaluation setup
  std::unique_ptr<DifferentiablePolicy> snapshot = policy.clone();
  std::vector<std::vector<ActionValue>> kl_draws;
  if (!policy.discrete()) {
    kl_draws.resize(data.states.size());
    for (std::size_t i = 0; i < data.states.size(); ++i)
      for (int k = 0; k < cfg.kl_samples; ++k)
        kl_draws[i].push_back(snapshot->sample(data.states[i], rng));
  }
  auto empirical_kl = [&](const DifferentiablePolicy& updated) {
    return policy.discrete()
               ? kl_mean(*snapshot, updated, data.states)
               : kl_mean(*snapshot, updated, data.states, kl_draws);
  };

  const Vec base = policy.trainable_params();
  double scale = 1.0;
  for (int i = 0; i <= cfg.max_backtracks; ++i, scale *= cfg.backtrack_coef) {
    Vec cand = base + scale * full_step;
    policy.set_trainable_params(cand);
    double surr = 0.0, kl = 0.0;
    bool ok = true;
    try {
      surr = surrogate_loss(policy, data);
      kl = empirical_kl(policy);
      ok = std::isfinite(surr) && std::isfinite(kl);
    } catch (const ZeroProbabilityError&) {
      ok = false;
    }
    if (ok && surr > report.surrogate_before && kl <= cfg.delta) {
      report.accepted = true;
      report.kl = kl;
      report.surrogate_after = surr;
      report.step_norm = scale * full_step.norm();
      report.backtracks = i;
      return report;
    }
  }
  policy.set_trainable_params(base);
  report.backtracks = cfg.max_backtracks + 1;
  return report;
}

/// Max relative disagreement between the analytic surrogate gradient and a
/// central finite difference at the given step size.
inline double gradient_check(DifferentiablePolicy& policy,
                             const StepData& data, double step = 1e-5) {
  Vec analytic = surrogate_grad(policy, data);
  const Vec base = policy.trainable_params();
  double worst = 0.0;
  for (int i = 0; i < base.size(); ++i) {
    Vec p = base;
    p[i] = base[i] + step;
    policy.set_trainable_params(p);
    double hi = surrogate_loss(policy, data);
    p[i] = base[i] - step;
    policy.set_trainable_params(p);
    double lo = surrogate_loss(policy, data);
    double numeric = (hi - lo) / (2.0 * step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                (std::abs(analytic[i]) + 1e-8));
  }
  policy.set_trainable_params(base);
  return worst;
}

}  // namespace learnsam

#endif  // LEARNSAM_TRPO_HPP_
