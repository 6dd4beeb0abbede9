#include <catch2/catch_amalgamated.hpp>

#include "learnsam/lambda.hpp"

using namespace learnsam;

namespace {

Vec v2(double x, double y) {
  Vec s(2);
  s << x, y;
  return s;
}

std::vector<Vec> random_support(Rng& rng, int count) {
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i)
    out.push_back(v2(rng.uniform(-3, 3), rng.uniform(-3, 3)));
  return out;
}

}  // namespace

TEST_CASE("point-to-set distance takes the minimum over the set") {
  DistanceMetric metric = DistanceMetric::weighted_l2(Vec::Ones(2));
  std::vector<Vec> support = {v2(1, 0), v2(0, 2)};
  LambdaEvaluator ev(metric, Bijection::linear(1.0), support);
  REQUIRE(ev.distance(v2(0, 0)) == Catch::Approx(1.0));
}

TEST_CASE("distance is zero exactly on support members") {
  std::vector<Vec> support = {v2(1, 1), v2(-2, 0.5)};
  for (auto kind : {DistanceMetric::weighted_l2(Vec::Ones(2)),
                    DistanceMetric::manhattan(), DistanceMetric::zero_one()}) {
    LambdaEvaluator ev(kind, Bijection::linear(1.0), support);
    REQUIRE(ev.distance(v2(1, 1)) == 0.0);
    REQUIRE(ev.distance(v2(-2, 0.5)) == 0.0);
  }
}

TEST_CASE("manhattan distance") {
  LambdaEvaluator ev(DistanceMetric::manhattan(), Bijection::linear(1.0),
                     {v2(0, 0)});
  REQUIRE(ev.distance(v2(2, 3)) == Catch::Approx(5.0));
}

TEST_CASE("dimension mismatch is rejected") {
  LambdaEvaluator ev(DistanceMetric::manhattan(), Bijection::linear(1.0),
                     {v2(0, 0)});
  REQUIRE_THROWS_AS(ev.distance(Vec::Ones(3)), DimensionError);
}

TEST_CASE("metric weights must be positive and match dimension") {
  Vec bad(2);
  bad << 1.0, 0.0;
  REQUIRE_THROWS_AS(DistanceMetric::weighted_l2(bad), ConfigError);
  LambdaEvaluator ev(DistanceMetric::weighted_l2(Vec::Ones(3)),
                     Bijection::linear(1.0), {Vec::Zero(3)});
  REQUIRE_THROWS_AS(ev.distance(v2(0, 0)), DimensionError);
}

TEST_CASE("lambda is 1 on support states") {
  std::vector<Vec> support = {v2(0.5, -1), v2(2, 2)};
  LambdaEvaluator ev(DistanceMetric::weighted_l2(Vec::Ones(2)),
                     Bijection::linear(3.0), support);
  for (const Vec& s : support) REQUIRE(ev.eval(s) == 1.0);
}

TEST_CASE("lambda values at unit and double distance") {
  LambdaEvaluator lin(DistanceMetric::weighted_l2(Vec::Ones(2)),
                      Bijection::linear(1.0), {v2(0, 0)});
  REQUIRE(lin.eval(v2(1, 0)) == Catch::Approx(std::exp(-1.0)).epsilon(1e-12));
  LambdaEvaluator sq(DistanceMetric::weighted_l2(Vec::Ones(2)),
                     Bijection::square(1.0), {v2(0, 0)});
  REQUIRE(sq.eval(v2(2, 0)) == Catch::Approx(std::exp(-4.0)).epsilon(1e-12));
}

TEST_CASE("zero_one lambda is an indicator of support membership") {
  LambdaEvaluator ev(DistanceMetric::zero_one(), Bijection::linear(1.0),
                     {v2(3, 4)});
  REQUIRE(ev.eval(v2(3, 4)) == 1.0);
  REQUIRE(ev.eval(v2(3, 5)) == 0.0);
}

TEST_CASE("batch evaluation is the pointwise map") {
  Rng rng(17);
  LambdaEvaluator ev(DistanceMetric::manhattan(), Bijection::linear(0.7),
                     random_support(rng, 5));
  std::vector<Vec> queries = random_support(rng, 8);
  Vec batch = ev.eval_batch(queries);
  for (std::size_t i = 0; i < queries.size(); ++i)
    REQUIRE(batch[i] == ev.eval(queries[i]));

  Vec support_batch = ev.eval_batch(ev.support());
  REQUIRE((support_batch.array() == 1.0).all());

  Vec single = ev.eval_batch({queries[0]});
  REQUIRE(single.size() == 1);
  REQUIRE(single[0] == ev.eval(queries[0]));
}

TEST_CASE("lambda is monotone in distance") {
  Rng rng(23);
  for (auto metric : {DistanceMetric::weighted_l2(Vec::Ones(2)),
                      DistanceMetric::manhattan()}) {
    for (auto phi : {Bijection::linear(0.8), Bijection::square(1.3)}) {
      LambdaEvaluator ev(metric, phi, random_support(rng, 4));
      for (int trial = 0; trial < 50; ++trial) {
        Vec s1 = v2(rng.uniform(-5, 5), rng.uniform(-5, 5));
        Vec s2 = v2(rng.uniform(-5, 5), rng.uniform(-5, 5));
        if (ev.distance(s1) <= ev.distance(s2))
          REQUIRE(ev.eval(s1) >= ev.eval(s2));
        REQUIRE(ev.eval(s1) >= 0.0);
        REQUIRE(ev.eval(s1) <= 1.0);
      }
    }
  }
}

TEST_CASE("linear phi decays slower than square phi beyond unit distance") {
  for (double d : {2.0, 3.0, 5.0}) {
    LambdaEvaluator lin(DistanceMetric::weighted_l2(Vec::Ones(2)),
                        Bijection::linear(1.0), {v2(0, 0)});
    LambdaEvaluator sq(DistanceMetric::weighted_l2(Vec::Ones(2)),
                       Bijection::square(1.0), {v2(0, 0)});
    REQUIRE(lin.eval(v2(d, 0)) > sq.eval(v2(d, 0)));
  }
}

TEST_CASE("union closure: max of evaluators equals evaluator of the union") {
  Rng rng(31);
  for (int trial = 0; trial < 25; ++trial) {
    auto support_a = random_support(rng, 3);
    auto support_b = random_support(rng, 4);
    Bijection phi = trial % 2 ? Bijection::linear(1.4) : Bijection::square(0.6);
    DistanceMetric metric = trial % 3 == 0
                                ? DistanceMetric::manhattan()
                                : DistanceMetric::weighted_l2(Vec::Ones(2));
    LambdaEvaluator ev_a(metric, phi, support_a);
    LambdaEvaluator ev_b(metric, phi, support_b);
    std::vector<Vec> union_support = support_a;
    union_support.insert(union_support.end(), support_b.begin(),
                         support_b.end());
    LambdaEvaluator ev_union(metric, phi, union_support);
    for (int q = 0; q < 20; ++q) {
      Vec s = v2(rng.uniform(-6, 6), rng.uniform(-6, 6));
      double max_of = std::max(ev_a.eval(s), ev_b.eval(s));
      REQUIRE(max_of == Catch::Approx(ev_union.eval(s)).margin(1e-12));
    }
  }
}

TEST_CASE("inverse-sd weights flag zero-spread dimensions") {
  std::vector<Vec> states = {v2(1, 0), v2(1, 2), v2(1, 4)};
  bool degenerate = false;
  Vec w = inverse_sd_weights(states, &degenerate);
  REQUIRE(degenerate);
  REQUIRE(w[0] == Catch::Approx(1e6));
  double sd = std::sqrt((0.0 * 0 + 4.0 + 16.0 + 0 * 0) / 3.0 - 4.0);
  REQUIRE(w[1] == Catch::Approx(1.0 / sd));
}

TEST_CASE("empty support is rejected") {
  REQUIRE_THROWS_AS(LambdaEvaluator(DistanceMetric::manhattan(),
                                    Bijection::linear(1.0), {}),
                    ConfigError);
}
