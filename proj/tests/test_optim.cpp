#include <catch2/catch_amalgamated.hpp>

#include <memory>

#include "learnsam/demo.hpp"
#include "learnsam/envs.hpp"
#include "learnsam/trpo.hpp"
#include "learnsam/value.hpp"
#include "oracles.hpp"

using namespace learnsam;

namespace {

Vec v1(double x) {
  Vec s(1);
  s << x;
  return s;
}

Vec v2(double x, double y) {
  Vec s(2);
  s << x, y;
  return s;
}

Trajectory constant_reward_traj(int len, double reward) {
  Trajectory traj;
  for (int t = 0; t < len; ++t) {
    Transition tr;
    tr.state = v2(t, 0);
    tr.action = ActionValue::of_index(0);
    tr.reward = reward;
    tr.next_state = v2(t + 1, 0);
    tr.done = (t + 1 == len);
    traj.transitions.push_back(tr);
  }
  traj.total_steps = len;
  return traj;
}

ValueFunction fresh_value(int state_dim, Rng& rng, double hi = 20.0) {
  return ValueFunction(
      state_dim, {16, 16},
      StateScaler::from_bounds(Vec::Zero(state_dim),
                               Vec::Constant(state_dim, hi)),
      rng);
}

/// One trainable parameter: the mean of a unit-variance Gaussian over a
/// one-dimensional action; the state is ignored. Small enough that the
/// natural gradient is known in closed form (Fisher = 1/sigma^2 = 1).
class BanditGaussianPolicy : public DifferentiablePolicy {
 public:
  explicit BanditGaussianPolicy(double mu) : mu_(mu) {}

  bool discrete() const override { return false; }
  int action_count() const override { return 1; }
  int param_count() const override { return 1; }
  Vec trainable_params() const override { return Vec::Constant(1, mu_); }
  void set_trainable_params(const Vec& p) override { mu_ = p[0]; }

  double log_prob(const Vec&, const ActionValue& a) const override {
    double z = a.vector[0] - mu_;
    return -0.5 * z * z - 0.5 * std::log(2.0 * M_PI);
  }
  Vec log_prob_grad(const Vec& s, const ActionValue& a,
                    double* logp = nullptr) const override {
    if (logp) *logp = log_prob(s, a);
    return Vec::Constant(1, a.vector[0] - mu_);
  }
  ActionValue sample(const Vec&, Rng& rng) const override {
    return ActionValue::of_vector(Vec::Constant(1, mu_ + rng.normal()));
  }
  ActionValue mode(const Vec&) const override {
    return ActionValue::of_vector(Vec::Constant(1, mu_));
  }
  std::unique_ptr<DifferentiablePolicy> clone() const override {
    return std::make_unique<BanditGaussianPolicy>(*this);
  }

 private:
  double mu_;
};

StepData gridworld_batch(CategoricalMlpPolicy& policy, ValueFunction& value,
                         const GridWorld& env, int steps, Rng& rng,
                         const TrustRegionConfig& cfg) {
  std::vector<Trajectory> trajs =
      collect_episodes(env, policy.sampler(), steps, rng);
  StepData data = flatten_batch(trajs, policy, Vec());
  fit_value(value, trajs, cfg.gamma, {});
  AdvantageBatch adv =
      estimate_advantages(trajs, value, cfg.gamma, cfg.gae_lambda, true);
  data.advantages = adv.advantages;
  return data;
}

}  // namespace

// -- value fitting --------------------------------------------------------------

TEST_CASE("value fit approaches the geometric series on constant rewards") {
  Rng rng(3);
  ValueFunction value = fresh_value(2, rng);
  std::vector<Trajectory> trajs(8, constant_reward_traj(20, 0.5));
  ValueFitConfig cfg;
  cfg.iters = 1500;
  cfg.lr = 0.5;
  fit_value(value, trajs, 0.9, cfg);
  for (int t = 0; t < 20; ++t) {
    double analytic = 0.5 * (1.0 - std::pow(0.9, 20 - t)) / 0.1;
    REQUIRE(value.predict(v2(t, 0)) == Catch::Approx(analytic).epsilon(0.05));
  }
}

TEST_CASE("value fit stays at zero when every reward is zero") {
  Rng rng(5);
  ValueFunction value = fresh_value(2, rng);
  std::vector<Trajectory> trajs(4, constant_reward_traj(15, 0.0));
  fit_value(value, trajs, 0.99, {});
  for (int t = 0; t < 15; ++t)
    REQUIRE(std::abs(value.predict(v2(t, 0))) < 1e-2);
}

TEST_CASE("refitting an unchanged batch never increases the loss") {
  Rng rng(7);
  ValueFunction value = fresh_value(2, rng);
  std::vector<Trajectory> trajs;
  Rng mk(11);
  for (int i = 0; i < 5; ++i)
    trajs.push_back(
        constant_reward_traj(10 + mk.uniform_int(10), mk.uniform(-1.0, 1.0)));
  ValueFitConfig cfg;
  cfg.iters = 40;
  double first = fit_value(value, trajs, 0.95, cfg);
  double second = fit_value(value, trajs, 0.95, cfg);
  REQUIRE(second <= first + 1e-12);
}

// -- advantage estimation ---------------------------------------------------------

TEST_CASE("gae with lambda 0 collapses to the one-step TD error") {
  Rng rng(13);
  ValueFunction value = fresh_value(2, rng);
  Rng perturb(17);
  Vec p = value.mlp().params();
  for (int i = 0; i < p.size(); ++i) p[i] += perturb.uniform(-0.4, 0.4);
  value.mlp().set_params(p);

  Trajectory traj = constant_reward_traj(12, 0.3);
  AdvantageBatch batch = estimate_advantages({traj}, value, 0.9, 0.0, false);
  for (int t = 0; t < 12; ++t) {
    double v_next =
        (t == 11) ? 0.0 : value.predict(traj.transitions[t + 1].state);
    double delta = traj.transitions[t].reward + 0.9 * v_next -
                   value.predict(traj.transitions[t].state);
    REQUIRE(batch.advantages[t] == Catch::Approx(delta).margin(1e-12));
  }
}

TEST_CASE("gae with lambda 1 and zero values is the return-to-go") {
  Rng rng(19);
  ValueFunction value = fresh_value(2, rng);  // zero output layer => V = 0
  Trajectory traj = constant_reward_traj(10, 1.0);
  AdvantageBatch batch = estimate_advantages({traj}, value, 0.9, 1.0, false);
  for (int t = 0; t < 10; ++t) {
    double g = 0.0;
    for (int l = t; l < 10; ++l) g += std::pow(0.9, l - t);
    REQUIRE(batch.advantages[t] == Catch::Approx(g).margin(1e-12));
  }
}

TEST_CASE("two-step hand example") {
  Rng rng(23);
  ValueFunction value = fresh_value(2, rng);
  Trajectory traj;
  for (int t = 0; t < 2; ++t) {
    Transition tr;
    tr.state = v2(t, 0);
    tr.action = ActionValue::of_index(0);
    tr.reward = t == 0 ? 0.0 : 1.0;
    tr.next_state = v2(t + 1, 0);
    tr.done = (t == 1);
    traj.transitions.push_back(tr);
  }
  traj.total_steps = 2;
  AdvantageBatch batch = estimate_advantages({traj}, value, 1.0, 1.0, false);
  REQUIRE(batch.advantages[0] == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(batch.advantages[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("normalized advantages have zero mean and unit spread") {
  Rng rng(29);
  ValueFunction value = fresh_value(2, rng);
  std::vector<Trajectory> trajs;
  Rng mk(31);
  for (int i = 0; i < 6; ++i)
    trajs.push_back(
        constant_reward_traj(8 + mk.uniform_int(8), mk.uniform(-1, 1)));
  AdvantageBatch batch = estimate_advantages(trajs, value, 0.95, 0.9, true);
  REQUIRE(batch.normalized);
  REQUIRE(std::abs(batch.advantages.mean()) < 1e-10);
  double sd = std::sqrt(
      (batch.advantages.array() - batch.advantages.mean()).square().mean());
  REQUIRE(std::abs(sd - 1.0) < 1e-10);
  REQUIRE(batch.raw_advantages != batch.advantages);
}

// -- surrogate ---------------------------------------------------------------------

TEST_CASE("surrogate at the behavior policy is the mean advantage") {
  Rng rng(37);
  GridWorld env(5);
  CategoricalMlpPolicy policy(2, {8}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 200, rng, cfg);
  REQUIRE(surrogate_loss(policy, data) ==
          Catch::Approx(data.advantages.mean()).margin(1e-10));
}

TEST_CASE("surrogate is linear in the advantages") {
  Rng rng(41);
  GridWorld env(5);
  CategoricalMlpPolicy policy(2, {8}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 150, rng, cfg);
  // move off the behavior policy so the ratios are not all 1
  Vec p = policy.trainable_params();
  Rng perturb(43);
  for (int i = 0; i < p.size(); ++i) p[i] += perturb.uniform(-0.1, 0.1);
  policy.set_trainable_params(p);
  double base = surrogate_loss(policy, data);
  data.advantages *= 2.0;
  REQUIRE(surrogate_loss(policy, data) ==
          Catch::Approx(2.0 * base).margin(1e-12));
}

TEST_CASE("surrogate gradient at the behavior policy is the score-weighted mean") {
  Rng rng(47);
  GridWorld env(5);
  CategoricalMlpPolicy policy(2, {6}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 150, rng, cfg);
  Vec grad = surrogate_grad(policy, data);
  Vec likelihood_ratio = Vec::Zero(policy.param_count());
  for (std::size_t i = 0; i < data.size(); ++i)
    likelihood_ratio += data.advantages[i] *
                        policy.log_prob_grad(data.states[i], data.actions[i]);
  likelihood_ratio /= static_cast<double>(data.size());
  REQUIRE((grad - likelihood_ratio).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("surrogate gradient matches finite differences") {
  Rng rng(53);
  GridWorld env(4);
  CategoricalMlpPolicy policy(2, {4}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 120, rng, cfg);
  Vec p = policy.trainable_params();
  Rng perturb(59);
  for (int i = 0; i < p.size(); ++i) p[i] += perturb.uniform(-0.2, 0.2);
  policy.set_trainable_params(p);

  Vec analytic = surrogate_grad(policy, data);
  Vec numeric = oracles::finite_diff_grad(
      [&](const Vec& q) {
        auto probe = policy.clone();
        probe->set_trainable_params(q);
        return surrogate_loss(*probe, data);
      },
      policy.trainable_params(), 1e-5);
  REQUIRE(oracles::max_rel_error(analytic, numeric) < 1e-4);
}

// -- conjugate gradient --------------------------------------------------------------

TEST_CASE("conjugate gradient solves a small SPD system") {
  Mat a = Mat::Random(8, 8);
  Mat spd = a * a.transpose() + 0.5 * Mat::Identity(8, 8);
  Vec b = Vec::Random(8);
  Vec x = conjugate_gradient([&](const Vec& v) { return Vec(spd * v); }, b, 50,
                             1e-16);
  REQUIRE((spd * x - b).norm() < 1e-8);
}

// -- trust-region step ----------------------------------------------------------------

TEST_CASE("zero advantages leave the policy untouched") {
  Rng rng(67);
  GridWorld env(5);
  CategoricalMlpPolicy policy(2, {8}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 100, rng, cfg);
  data.advantages.setZero();
  Vec before = policy.trainable_params();
  StepReport report = trust_region_step(policy, data, cfg, rng);
  REQUIRE_FALSE(report.accepted);
  REQUIRE(policy.trainable_params() == before);
}

TEST_CASE("accepted steps respect the KL bound and improve the surrogate") {
  Rng rng(71);
  GridWorld env(6);
  CategoricalMlpPolicy policy(2, {8, 8}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  cfg.delta = 0.01;
  int accepted = 0;
  for (int epoch = 0; epoch < 8; ++epoch) {
    StepData data = gridworld_batch(policy, value, env, 300, rng, cfg);
    auto snapshot = policy.clone();
    double before = surrogate_loss(policy, data);
    StepReport report = trust_region_step(policy, data, cfg, rng);
    if (!report.accepted) continue;
    ++accepted;
    double kl = kl_mean(*snapshot, policy, data.states);
    REQUIRE(kl <= cfg.delta + 1e-12);
    REQUIRE(report.kl == Catch::Approx(kl).margin(1e-12));
    REQUIRE(surrogate_loss(policy, data) > before);
  }
  REQUIRE(accepted > 0);
}

TEST_CASE("bandit step follows the analytic natural gradient") {
  Rng rng(73);
  BanditGaussianPolicy policy(0.0);
  StepData data;
  Rng draws(79);
  for (int i = 0; i < 400; ++i) {
    double a = draws.normal();
    data.states.push_back(v1(0));
    data.actions.push_back(ActionValue::of_vector(Vec::Constant(1, a)));
  }
  // advantage = action value: the analytic policy gradient is
  // E[a (a - mu)] = 1 > 0, so mu must move up
  data.advantages = Vec(data.states.size());
  data.logp_behavior = Vec(data.states.size());
  for (std::size_t i = 0; i < data.states.size(); ++i) {
    data.advantages[i] = data.actions[i].vector[0];
    data.logp_behavior[i] = policy.log_prob(data.states[i], data.actions[i]);
  }
  Vec g = surrogate_grad(policy, data);
  REQUIRE(g[0] > 0.5);  // near E[a^2] = 1

  TrustRegionConfig cfg;
  StepReport report = trust_region_step(policy, data, cfg, rng);
  REQUIRE(report.accepted);
  double mu_after = policy.trainable_params()[0];
  REQUIRE(mu_after > 0.0);
  // Fisher ~ 1, so the accepted step lands near sqrt(2 delta)
  REQUIRE(mu_after == Catch::Approx(std::sqrt(2 * cfg.delta)).epsilon(0.3));
}

TEST_CASE("non-finite advantages abort the step and report it") {
  Rng rng(83);
  GridWorld env(4);
  CategoricalMlpPolicy policy(2, {4}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 60, rng, cfg);
  data.advantages[0] = std::numeric_limits<double>::quiet_NaN();
  Vec before = policy.trainable_params();
  StepReport report = trust_region_step(policy, data, cfg, rng);
  REQUIRE(report.nonfinite_abort);
  REQUIRE_FALSE(report.accepted);
  REQUIRE(policy.trainable_params() == before);
}

// -- gradient check --------------------------------------------------------------------

TEST_CASE("gradient check passes on a tiny policy") {
  Rng rng(89);
  GridWorld env(4);
  // 2 -> 4 -> 4 network: 32 parameters
  CategoricalMlpPolicy policy(2, {4}, 4, StateScaler::identity(2), rng);
  REQUIRE(policy.param_count() <= 50);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 100, rng, cfg);
  REQUIRE(gradient_check(policy, data, 1e-5) < 1e-4);
}

TEST_CASE("gradient check is vacuous on a zero-advantage batch") {
  Rng rng(97);
  GridWorld env(4);
  CategoricalMlpPolicy policy(2, {4}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 80, rng, cfg);
  data.advantages.setZero();
  REQUIRE(gradient_check(policy, data, 1e-5) < 1e-6);
}

TEST_CASE("gradient check error grows with the step size") {
  Rng rng(101);
  GridWorld env(4);
  CategoricalMlpPolicy policy(2, {4}, 4, StateScaler::identity(2), rng);
  ValueFunction value = fresh_value(2, rng);
  TrustRegionConfig cfg;
  StepData data = gridworld_batch(policy, value, env, 80, rng, cfg);
  double fine = gradient_check(policy, data, 1e-5);
  double coarse = gradient_check(policy, data, 1e-2);
  WARN("truncation behaviour: step 1e-5 error " << fine << ", step 1e-2 error "
                                                << coarse);
  REQUIRE(std::isfinite(fine));
  REQUIRE(std::isfinite(coarse));
}
