#ifndef LEARNSAM_DEMO_HPP_
#define LEARNSAM_DEMO_HPP_

#include <algorithm>
#include <functional>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "learnsam/demonstration.hpp"
#include "learnsam/envs.hpp"
#include "learnsam/trpo.hpp"

namespace learnsam {

/// A near-optimal policy for an environment, used to generate
/// demonstrations of controllable quality.
struct ReferenceExpert {
  std::function<ActionValue(const Vec&)> act;    // deterministic expert action
  std::shared_ptr<DifferentiablePolicy> policy;  // set when trained, else null
  double eval_return = 0.0;
  bool budget_exhausted = false;
};

/// Mean aggregated reward of `episodes` rollouts under a deterministic
/// action rule.
inline double evaluate_deterministic(
    const Environment& env, const std::function<ActionValue(const Vec&)>& act,
    int episodes, Rng& rng) {
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    Trajectory traj = rollout(
        env, [&](const StateVector& s, Rng&) { return act(s); }, rng);
    total += aggregated_reward(traj);
  }
  return total / episodes;
}

inline ReferenceExpert analytic_gridworld_expert(const GridWorld& env) {
  const int n = env.n();
  ReferenceExpert expert;
  expert.act = [n](const Vec& s) {
    return ActionValue::of_index(
        std::lround(s[0]) < n - 1 ? GridWorld::kRight : GridWorld::kUp);
  };
  expert.eval_return = 1.0;
  return expert;
}

inline ReferenceExpert analytic_pointmass_expert(const PointMass& env) {
  const double step = env.step_size();
  ReferenceExpert expert;
  expert.act = [step](const Vec& s) {
    Vec cmd = (PointMass::goal_center() - s) / step;
    return ActionValue::of_vector(cmd.cwiseMax(-1.0).cwiseMin(1.0));
  };
  expert.eval_return = 1.0;
  return expert;
}

struct ReferenceTrainConfig {
  bool analytic = false;  // use the closed-form expert instead of training
  int epochs = 80;
  int steps_per_epoch = 4096;
  double target_return = 0.98;  // stop once evaluation reaches this
  int eval_episodes = 50;
  std::vector<int> hidden = {32, 32};
  double init_log_sigma = std::log(0.6);
  ValueFitConfig value_fit;
  TrustRegionConfig trpo;
};

/// Collects complete-episode rollouts until at least `min_steps` transitions
/// have been gathered (the final episode is kept whole).
inline std::vector<Trajectory> collect_episodes(const Environment& env,
                                                const SamplingPolicy& policy,
                                                int min_steps, Rng& rng) {
  std::vector<Trajectory> out;
  int steps = 0;
  while (steps < min_steps) {
    out.push_back(rollout(env, policy, rng));
    steps += out.back().total_steps;
  }
  return out;
}

inline StepData flatten_batch(const std::vector<Trajectory>& trajs,
                              const DifferentiablePolicy& behavior,
                              const Vec& advantages) {
  StepData data;
  for (const Trajectory& traj : trajs)
    for (const Transition& tr : traj.transitions) {
      data.states.push_back(tr.state);
      data.actions.push_back(tr.action);
    }
  data.advantages = advantages;
  data.logp_behavior = Vec(data.states.size());
  for (std::size_t i = 0; i < data.states.size(); ++i)
    data.logp_behavior[i] = behavior.log_prob(data.states[i], data.actions[i]);
  return data;
}

/// Trains an expert with the trust-region optimizer until evaluation return
/// plateaus at the target or the epoch budget runs out. With cfg.analytic
/// the closed-form expert is returned instead (no training).
inline ReferenceExpert train_reference_expert(const Environment& env,
                                              const ReferenceTrainConfig& cfg,
                                              std::uint64_t seed) {
  if (cfg.analytic) {
    if (auto* grid = dynamic_cast<const GridWorld*>(&env))
      return analytic_gridworld_expert(*grid);
    if (auto* pm = dynamic_cast<const PointMass*>(&env))
      return analytic_pointmass_expert(*pm);
    throw ConfigError("no analytic expert for this environment");
  }
  const EnvironmentSpec& spec = env.spec();
  Rng rng_init = Rng::stream(seed, "expert-init");
  Rng rng_train = Rng::stream(seed, "expert-train");
  Rng rng_eval = Rng::stream(seed, "expert-eval");

  StateScaler scaler = StateScaler::from_bounds(spec.state_low, spec.state_high);
  std::shared_ptr<DifferentiablePolicy> policy;
  if (spec.action_kind == ActionKind::discrete)
    policy = std::make_shared<CategoricalMlpPolicy>(
        spec.state_dim, cfg.hidden, spec.action_dim_or_count, scaler, rng_init);
  else
    policy = std::make_shared<GaussianMlpPolicy>(
        spec.state_dim, cfg.hidden, spec.action_dim_or_count, scaler, rng_init,
        cfg.init_log_sigma);
  ValueFunction value(spec.state_dim, cfg.hidden, scaler, rng_init);

  ReferenceExpert expert;
  expert.policy = policy;
  expert.act = [policy](const Vec& s) { return policy->mode(s); };
  expert.budget_exhausted = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<Trajectory> trajs = collect_episodes(
        env, policy->sampler(), cfg.steps_per_epoch, rng_train);
    StepData data = flatten_batch(trajs, *policy, Vec());
    fit_value(value, trajs, cfg.trpo.gamma, cfg.value_fit);
    AdvantageBatch adv = estimate_advantages(trajs, value, cfg.trpo.gamma,
                                             cfg.trpo.gae_lambda,
                                             cfg.trpo.normalize_advantages);
    data.advantages = adv.advantages;
    trust_region_step(*policy, data, cfg.trpo, rng_train);
    expert.eval_return =
        evaluate_deterministic(env, expert.act, cfg.eval_episodes, rng_eval);
    if (expert.eval_return >= cfg.target_return) {
      expert.budget_exhausted = false;
      break;
    }
  }
  return expert;
}

/// Rollouts under the expert with a controllable corruption of every
/// action: Gaussian perturbation for continuous commands, a uniform random
/// replacement with probability min(noise_sd, 1) for discrete ones. Episodes
/// are concatenated and truncated to exactly n_pairs; source_quality records
/// the mean aggregated reward of the generating episodes.
inline DemonstrationSet sample_demonstration(const ReferenceExpert& expert,
                                             const Environment& env,
                                             double noise_sd, int n_pairs,
                                             Rng& rng) {
  if (n_pairs < 1) throw std::invalid_argument("n_pairs must be >= 1");
  const EnvironmentSpec& spec = env.spec();
  DemonstrationSet demo;
  demo.env_id = spec.id;
  demo.noise_sd = noise_sd;
  double quality_total = 0.0;
  int episodes = 0;
  while (static_cast<int>(demo.pairs.size()) < n_pairs) {
    StateVector s = env.reset(rng);
    double episode_reward = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
      ActionValue a = expert.act(s);
      if (spec.action_kind == ActionKind::discrete) {
        if (rng.uniform() < std::min(noise_sd, 1.0))
          a = ActionValue::of_index(rng.uniform_int(spec.action_dim_or_count));
      } else if (noise_sd > 0.0) {
        for (int i = 0; i < a.vector.size(); ++i)
          a.vector[i] += noise_sd * rng.normal();
      }
      Transition tr = env.step(s, a);
      demo.pairs.emplace_back(s, a);
      episode_reward += tr.reward;
      s = tr.next_state;
      if (tr.done) break;
    }
    quality_total += episode_reward;
    ++episodes;
  }
  demo.pairs.resize(n_pairs);
  demo.source_quality = quality_total / episodes;
  return demo;
}

/// Uniform subsample without replacement, order preserved.
inline DemonstrationSet sparsify(const DemonstrationSet& demo, int n,
                                 Rng& rng) {
  const int total = static_cast<int>(demo.size());
  if (n < 1 || n > total)
    throw std::out_of_range("sparsify count outside [1, |demo|]");
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < n; ++i) {
    int j = i + rng.uniform_int(total - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  DemonstrationSet out;
  out.env_id = demo.env_id;
  out.noise_sd = demo.noise_sd;
  out.source_quality = demo.source_quality;
  for (int i : idx) out.pairs.push_back(demo.pairs[i]);
  return out;
}

}  // namespace learnsam

#endif  // LEARNSAM_DEMO_HPP_
