#ifndef LEARNSAM_MDP_HPP_
#define LEARNSAM_MDP_HPP_

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "learnsam/common.hpp"

namespace learnsam {

using StateVector = Vec;

enum class ActionKind { discrete, continuous };

/// Either a discrete action index or a continuous command vector.
struct ActionValue {
  int index = -1;
  Vec vector;

  static ActionValue of_index(int i) {
    ActionValue a;
    a.index = i;
    return a;
  }
  static ActionValue of_vector(Vec v) {
    ActionValue a;
    a.vector = std::move(v);
    return a;
  }
  bool is_discrete() const { return index >= 0; }
};

struct Transition {
  StateVector state;
  ActionValue action;
  double reward = 0.0;
  StateVector next_state;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> transitions;
  int total_steps = 0;

  bool empty() const { return transitions.empty(); }
};

enum class RewardType { goal_sparse };

struct EnvironmentSpec {
  std::string id;
  int state_dim = 0;
  ActionKind action_kind = ActionKind::discrete;
  int action_dim_or_count = 0;  // |A| for discrete, dim for continuous
  int horizon = 1;
  double gamma = 0.99;
  RewardType reward_type = RewardType::goal_sparse;
  // per-dimension state range, used by function approximators to normalize
  Vec state_low, state_high;
};

/// Value-like environment: dynamics are exposed through the pure
/// step(s, a) so callers can also use it as a one-step model (the
/// built-in environments are deterministic). Episode bookkeeping such
/// as the horizon lives in rollout(), not here.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvironmentSpec& spec() const = 0;
  virtual StateVector reset(Rng& rng) const = 0;
  virtual Transition step(const StateVector& s, const ActionValue& a) const = 0;
};

/// Anything that can pick an action at a state.
using SamplingPolicy =
    std::function<ActionValue(const StateVector&, Rng&)>;

inline Trajectory rollout(const Environment& env, const SamplingPolicy& policy,
                          Rng& rng) {
  Trajectory traj;
  const int horizon = env.spec().horizon;
  StateVector s = env.reset(rng);
  for (int t = 0; t < horizon; ++t) {
    ActionValue a = policy(s, rng);
    Transition tr = env.step(s, a);
    s = tr.next_state;
    bool done = tr.done;
    traj.transitions.push_back(std::move(tr));
    if (done) break;
  }
  traj.total_steps = static_cast<int>(traj.transitions.size());
  return traj;
}

inline double discounted_return(const Trajectory& traj, double gamma) {
  double g = 0.0;
  double scale = 1.0;
  for (const Transition& tr : traj.transitions) {
    g += scale * tr.reward;
    scale *= gamma;
  }
  return g;
}

inline double aggregated_reward(const Trajectory& traj) {
  double g = 0.0;
  for (const Transition& tr : traj.transitions) g += tr.reward;
  return g;
}

}  // namespace learnsam

#endif  // LEARNSAM_MDP_HPP_
