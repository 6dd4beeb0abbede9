#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "learnsam/expert.hpp"
#include "learnsam/policy.hpp"
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

EnvironmentSpec grid_spec() {
  EnvironmentSpec spec;
  spec.state_dim = 2;
  spec.action_kind = ActionKind::discrete;
  spec.action_dim_or_count = 4;
  spec.horizon = 32;
  return spec;
}

EnvironmentSpec line_spec() {
  EnvironmentSpec spec;
  spec.state_dim = 1;
  spec.action_kind = ActionKind::continuous;
  spec.action_dim_or_count = 1;
  spec.horizon = 32;
  return spec;
}

DemonstrationSet demo_of(std::vector<std::pair<Vec, ActionValue>> pairs) {
  DemonstrationSet demo;
  demo.pairs = std::move(pairs);
  demo.env_id = "test";
  return demo;
}

}  // namespace

TEST_CASE("mlp backprop matches finite differences") {
  Rng rng(3);
  Mlp mlp(3, {5, 4}, 2);
  mlp.init(rng);
  Vec params = mlp.params();
  for (int i = 0; i < params.size(); ++i) params[i] += rng.uniform(-0.3, 0.3);
  mlp.set_params(params);
  Vec x(3), dy(2);
  x << 0.3, -0.8, 1.1;
  dy << 0.7, -0.2;

  Mlp::Trace tr;
  mlp.forward(x, tr);
  Vec grad = Vec::Zero(mlp.param_count());
  mlp.backward(tr, dy, grad);

  Vec numeric = oracles::finite_diff_grad(
      [&](const Vec& p) {
        Mlp probe = mlp;
        probe.set_params(p);
        return dy.dot(probe.forward(x));
      },
      params);
  REQUIRE(oracles::max_rel_error(grad, numeric) < 1e-6);
}

TEST_CASE("categorical policy log-prob gradient matches finite differences") {
  Rng rng(5);
  CategoricalMlpPolicy policy(2, {4}, 3, StateScaler::identity(2), rng);
  Vec params = policy.trainable_params();
  for (int i = 0; i < params.size(); ++i) params[i] += rng.uniform(-0.5, 0.5);
  policy.set_trainable_params(params);
  Vec s = v2(0.4, -1.2);
  ActionValue a = ActionValue::of_index(2);

  double logp = 0.0;
  Vec grad = policy.log_prob_grad(s, a, &logp);
  REQUIRE(logp == Catch::Approx(policy.log_prob(s, a)));
  Vec numeric = oracles::finite_diff_grad(
      [&](const Vec& p) {
        auto probe = policy.clone();
        probe->set_trainable_params(p);
        return probe->log_prob(s, a);
      },
      params);
  REQUIRE(oracles::max_rel_error(grad, numeric) < 1e-5);
  REQUIRE(policy.action_probs(s).sum() == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("gaussian policy log-prob gradient matches finite differences") {
  Rng rng(7);
  GaussianMlpPolicy policy(2, {4}, 2, StateScaler::identity(2), rng, -0.4);
  Vec params = policy.trainable_params();
  for (int i = 0; i < params.size(); ++i) params[i] += rng.uniform(-0.5, 0.5);
  policy.set_trainable_params(params);
  Vec s = v2(0.9, 0.1);
  ActionValue a = ActionValue::of_vector(v2(0.3, -0.6));

  Vec grad = policy.log_prob_grad(s, a);
  Vec numeric = oracles::finite_diff_grad(
      [&](const Vec& p) {
        auto probe = policy.clone();
        probe->set_trainable_params(p);
        return probe->log_prob(s, a);
      },
      params);
  REQUIRE(oracles::max_rel_error(grad, numeric) < 1e-5);
}

TEST_CASE("tabular expert reproduces empirical frequencies") {
  ExpertTrainConfig cfg;
  cfg.smoothing_alpha = 0.0;
  Vec s1 = v2(1, 1);
  auto right = ActionValue::of_index(0);
  auto up = ActionValue::of_index(1);

  ExpertPolicy pure = pretrain_expert(
      demo_of({{s1, right}, {s1, right}, {s1, right}}), grid_spec(), cfg);
  REQUIRE(pure.action_probs(s1)[0] == 1.0);

  ExpertPolicy mixed = pretrain_expert(
      demo_of({{s1, right}, {s1, right}, {s1, right}, {s1, up}}), grid_spec(),
      cfg);
  REQUIRE(mixed.action_probs(s1)[0] == Catch::Approx(0.75));
  REQUIRE(mixed.action_probs(s1)[1] == Catch::Approx(0.25));
}

TEST_CASE("tabular smoothing keeps every action possible") {
  ExpertTrainConfig cfg;
  cfg.smoothing_alpha = 0.1;
  Vec s1 = v2(0, 0);
  ExpertPolicy e = pretrain_expert(
      demo_of({{s1, ActionValue::of_index(0)}}), grid_spec(), cfg);
  Vec p = e.action_probs(s1);
  REQUIRE(p.minCoeff() > 0.0);
  REQUIRE(p.sum() == Catch::Approx(1.0).margin(1e-12));
  // off-support states fall back to uniform
  REQUIRE(e.action_probs(v2(5, 5))[2] == Catch::Approx(0.25));
}

TEST_CASE("continuous expert recovers a noiseless linear map") {
  std::vector<std::pair<Vec, ActionValue>> pairs;
  for (double s = -1.0; s <= 1.0; s += 0.25)
    pairs.push_back({v1(s), ActionValue::of_vector(v1(2.0 * s))});
  ExpertPolicy e = pretrain_expert(demo_of(std::move(pairs)), line_spec());
  REQUIRE(e.mean(v1(1.0))[0] == Catch::Approx(2.0).margin(1e-6));
  REQUIRE(e.sigma()[0] == Catch::Approx(0.05));  // floor on zero residuals
}

TEST_CASE("empty demonstration is rejected") {
  REQUIRE_THROWS_AS(pretrain_expert(DemonstrationSet{}, grid_spec()),
                    std::invalid_argument);
}

TEST_CASE("expert policies round-trip through json exactly") {
  Rng rng(11);
  std::vector<std::pair<Vec, ActionValue>> pairs;
  for (int i = 0; i < 12; ++i)
    pairs.push_back({v2(rng.uniform_int(4), rng.uniform_int(4)),
                     ActionValue::of_index(rng.uniform_int(4))});
  ExpertPolicy discrete = pretrain_expert(demo_of(std::move(pairs)), grid_spec());

  std::vector<std::pair<Vec, ActionValue>> cpairs;
  for (int i = 0; i < 9; ++i) {
    double s = rng.uniform(-1, 1);
    cpairs.push_back(
        {v1(s), ActionValue::of_vector(v1(0.7 * s + rng.uniform(-0.1, 0.1)))});
  }
  ExpertPolicy continuous =
      pretrain_expert(demo_of(std::move(cpairs)), line_spec());

  for (const ExpertPolicy& original : {discrete, continuous}) {
    std::string path =
        (std::filesystem::temp_directory_path() / "expert_rt.json").string();
    save_expert_json(original, path);
    ExpertPolicy loaded = load_expert_json(path);
    REQUIRE(loaded.discrete() == original.discrete());
    REQUIRE(loaded.support_states().size() == original.support_states().size());
    for (std::size_t i = 0; i < original.support_states().size(); ++i)
      REQUIRE(loaded.support_states()[i] == original.support_states()[i]);
    Rng probe(5);
    for (int t = 0; t < 20; ++t) {
      Vec s = original.discrete() ? v2(probe.uniform_int(5), probe.uniform_int(5))
                                  : v1(probe.uniform(-1, 1));
      ActionValue a = original.discrete()
                          ? ActionValue::of_index(probe.uniform_int(4))
                          : ActionValue::of_vector(v1(probe.uniform(-1, 1)));
      REQUIRE(original.prob(s, a) == loaded.prob(s, a));
    }
    std::remove(path.c_str());
  }
}

TEST_CASE("mean KL of identical discrete policies is zero") {
  Rng rng(13);
  CategoricalMlpPolicy p(2, {4}, 3, StateScaler::identity(2), rng);
  std::vector<Vec> states = {v2(0, 0), v2(1, -1), v2(0.5, 2)};
  REQUIRE(kl_mean(p, p, states) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("monte-carlo KL matches the closed form for unit gaussians") {
  Rng rng(17);
  GaussianMlpPolicy p(1, {}, 1, StateScaler::identity(1), rng, 0.0);
  GaussianMlpPolicy q(1, {}, 1, StateScaler::identity(1), rng, 0.0);
  // linear mean head: [weight, bias, log sigma]; means 0 and 1, sigma 1
  Vec pp(3), qp(3);
  pp << 0, 0, 0;
  qp << 0, 1, 0;
  p.set_trainable_params(pp);
  q.set_trainable_params(qp);
  std::vector<Vec> states(10, v1(0.3));
  Rng draw(19);
  double kl = kl_mean(p, q, states, draw, 640);
  REQUIRE(kl == Catch::Approx(0.5).margin(0.06));  // 6400 draws, ~4 SE
}

TEST_CASE("discrete KL is nonnegative over random policy pairs") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    CategoricalMlpPolicy p(2, {3}, 4, StateScaler::identity(2), rng);
    CategoricalMlpPolicy q(2, {3}, 4, StateScaler::identity(2), rng);
    Vec pp = p.trainable_params(), qp = q.trainable_params();
    for (int i = 0; i < pp.size(); ++i) pp[i] += rng.uniform(-1, 1);
    for (int i = 0; i < qp.size(); ++i) qp[i] += rng.uniform(-1, 1);
    p.set_trainable_params(pp);
    q.set_trainable_params(qp);
    std::vector<Vec> states = {v2(rng.uniform(-2, 2), rng.uniform(-2, 2))};
    REQUIRE(kl_mean(p, q, states) >= -1e-15);
  }
}

TEST_CASE("policy sampling respects the distribution") {
  Rng rng(29);
  CategoricalMlpPolicy p(2, {4}, 3, StateScaler::identity(2), rng);
  Vec params = p.trainable_params();
  for (int i = 0; i < params.size(); ++i) params[i] += rng.uniform(-1, 1);
  p.set_trainable_params(params);
  Vec s = v2(0.2, 0.8);
  Vec probs = p.action_probs(s);
  Vec counts = Vec::Zero(3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) counts[p.sample(s, rng).index] += 1.0;
  for (int a = 0; a < 3; ++a) {
    double se = std::sqrt(probs[a] * (1 - probs[a]) / n);
    REQUIRE(counts[a] / n == Catch::Approx(probs[a]).margin(4 * se + 1e-9));
  }
}
