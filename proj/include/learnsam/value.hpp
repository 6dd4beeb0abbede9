#ifndef LEARNSAM_VALUE_HPP_
#define LEARNSAM_VALUE_HPP_

#include <cmath>
#include <vector>

#include "learnsam/mdp.hpp"
#include "learnsam/mlp.hpp"
#include "learnsam/policy.hpp"

namespace learnsam {

struct ValueFitConfig {
  int iters = 80;
  double lr = 0.1;
};

/// State-value approximator V(s).
class ValueFunction {
 public:
  ValueFunction(int state_dim, const std::vector<int>& hidden,
                StateScaler scaler, Rng& rng)
      : mlp_(state_dim, hidden, 1), scaler_(std::move(scaler)) {
    mlp_.init(rng);
  }

  double predict(const Vec& s) const {
    return mlp_.forward(scaler_.apply(s))[0];
  }

  /// Predictions for many states at once (columns of one matrix pass).
  Vec predict_batch(const std::vector<Vec>& states) const {
    Mat x(mlp_.input_dim(), states.size());
    for (std::size_t i = 0; i < states.size(); ++i)
      x.col(i) = scaler_.apply(states[i]);
    return mlp_.forward_batch(x).row(0).transpose();
  }

  const Mlp& mlp() const { return mlp_; }
  Mlp& mlp() { return mlp_; }
  const StateScaler& scaler() const { return scaler_; }

 private:
  Mlp mlp_;
  StateScaler scaler_;
};

/// Discounted return-to-go targets; truncated (not-done) trajectory tails
/// are completed with the current value estimate of the state after the
/// last transition.
inline std::vector<Vec> value_targets(const std::vector<Trajectory>& trajs,
                                      const ValueFunction& value,
                                      double gamma) {
  std::vector<Vec> targets;
  targets.reserve(trajs.size());
  for (const Trajectory& traj : trajs) {
    const int t_len = traj.total_steps;
    Vec g(t_len);
    const Transition& last = traj.transitions.back();
    double tail = last.done ? 0.0 : value.predict(last.next_state);
    for (int t = t_len - 1; t >= 0; --t) {
      tail = traj.transitions[t].reward + gamma * tail;
      g[t] = tail;
    }
    targets.push_back(std::move(g));
  }
  return targets;
}

/// Full-batch gradient regression of V onto the return targets, with step
/// halving so the training loss never increases between iterations.
/// Returns the final mean-squared loss.
inline double fit_value(ValueFunction& value,
                        const std::vector<Trajectory>& trajs, double gamma,
                        const ValueFitConfig& cfg = {}) {
  if (trajs.empty()) throw std::invalid_argument("empty batch for value fit");
  std::vector<Vec> targets = value_targets(trajs, value, gamma);

  int total = 0;
  for (const Trajectory& t : trajs) total += t.total_steps;
  Mat x(value.mlp().input_dim(), total);
  Vec y(total);
  int col = 0;
  for (std::size_t i = 0; i < trajs.size(); ++i)
    for (int t = 0; t < trajs[i].total_steps; ++t, ++col) {
      x.col(col) = value.scaler().apply(trajs[i].transitions[t].state);
      y[col] = targets[i][t];
    }
  const double n = static_cast<double>(total);

  Mlp& mlp = value.mlp();
  auto loss_at = [&](const Vec& params) {
    Mlp probe = mlp;
    probe.set_params(params);
    return (probe.forward_batch(x).row(0).transpose() - y).squaredNorm() / n;
  };

  Vec params = mlp.params();
  double loss = loss_at(params);
  double lr = cfg.lr;
  Vec rms = Vec::Zero(mlp.param_count());
  for (int it = 0; it < cfg.iters; ++it) {
    Vec grad = Vec::Zero(mlp.param_count());
    mlp.set_params(params);
    Mlp::BatchTrace tr;
    Mat out = mlp.forward_batch(x, tr);
    Mat dy = (2.0 / n) * (out.row(0).transpose() - y).transpose();
    mlp.backward_batch(tr, dy, grad);
    // diagonally preconditioned descent direction; positive scaling keeps
    // it a descent direction, the acceptance rule keeps the loss monotone
    rms = 0.95 * rms + 0.05 * grad.cwiseProduct(grad);
    Vec direction =
        grad.cwiseQuotient((rms.cwiseSqrt().array() + 1e-8).matrix());
    bool stepped = false;
    for (int halvings = 0; halvings < 30; ++halvings) {
      Vec cand = params - lr * direction;
      double cand_loss = loss_at(cand);
      if (cand_loss <= loss) {
        params = cand;
        loss = cand_loss;
        lr *= 1.1;
        stepped = true;
        break;
      }
      lr *= 0.5;
    }
    if (!stepped) break;  // no descent at any feasible step
  }
  mlp.set_params(params);
  return loss;
}

/// Per-transition estimates used by the policy update and the scoring.
struct AdvantageBatch {
  Vec advantages;      // normalized when `normalized` is set
  Vec raw_advantages;  // untouched estimates (the scoring path needs these)
  Vec values;          // V(s_t)
  Vec returns;         // return-to-go targets
  bool normalized = false;
};

/// Generalized advantage estimation:
///   A_t = sum_l (gamma*lambda)^l delta_{t+l},
///   delta_t = r_t + gamma V(s_{t+1}) - V(s_t), terminal V = 0.
inline AdvantageBatch estimate_advantages(const std::vector<Trajectory>& trajs,
                                          const ValueFunction& value,
                                          double gamma, double lambda_adv,
                                          bool normalize = true) {
  int total = 0;
  for (const Trajectory& t : trajs) total += t.total_steps;
  AdvantageBatch batch;
  batch.advantages = Vec(total);
  batch.values = Vec(total);
  batch.returns = Vec(total);

  std::vector<Vec> targets = value_targets(trajs, value, gamma);
  std::vector<Vec> all_states;
  all_states.reserve(total);
  for (const Trajectory& traj : trajs)
    for (const Transition& tr : traj.transitions) all_states.push_back(tr.state);
  Vec all_values = value.predict_batch(all_states);

  int offset = 0;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const Trajectory& traj = trajs[i];
    const int t_len = traj.total_steps;
    Vec v = all_values.segment(offset, t_len);
    const Transition& last = traj.transitions.back();
    double v_end = last.done ? 0.0 : value.predict(last.next_state);
    double acc = 0.0;
    for (int t = t_len - 1; t >= 0; --t) {
      double v_next = (t == t_len - 1) ? v_end : v[t + 1];
      double delta = traj.transitions[t].reward + gamma * v_next - v[t];
      acc = delta + gamma * lambda_adv * acc;
      batch.advantages[offset + t] = acc;
      batch.values[offset + t] = v[t];
      batch.returns[offset + t] = targets[i][t];
    }
    offset += t_len;
  }
  batch.raw_advantages = batch.advantages;
  if (normalize && total > 0) {
    double mean = batch.advantages.mean();
    double sd = std::sqrt((batch.advantages.array() - mean).square().mean());
    if (sd > 1e-12) {
      batch.advantages = (batch.advantages.array() - mean) / sd;
      batch.normalized = true;
    } else {
      batch.advantages = batch.advantages.array() - mean;
    }
  }
  return batch;
}

}  // namespace learnsam

#endif  // LEARNSAM_VALUE_HPP_
