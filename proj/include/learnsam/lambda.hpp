#ifndef LEARNSAM_LAMBDA_HPP_
#define LEARNSAM_LAMBDA_HPP_

#include <cmath>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "learnsam/common.hpp"

namespace learnsam {

/// Point-to-set state distance. The set form takes the minimum over the
/// demonstrated states, which is what keeps the max-of-evaluators identity
/// exact when supports are unioned.
struct DistanceMetric {
  enum class Kind { weighted_l2, manhattan, zero_one };
  Kind kind = Kind::weighted_l2;
  Vec weights;  // weighted_l2 only; strictly positive, state-dimension length

  static DistanceMetric weighted_l2(Vec w) {
    DistanceMetric m;
    m.kind = Kind::weighted_l2;
    if ((w.array() <= 0).any())
      throw ConfigError("weighted_l2 weights must be strictly positive");
    m.weights = std::move(w);
    return m;
  }
  static DistanceMetric manhattan() {
    DistanceMetric m;
    m.kind = Kind::manhattan;
    return m;
  }
  static DistanceMetric zero_one() {
    DistanceMetric m;
    m.kind = Kind::zero_one;
    return m;
  }

  double point_distance(const Vec& a, const Vec& b) const {
    if (a.size() != b.size()) throw DimensionError("state dimension mismatch");
    switch (kind) {
      case Kind::weighted_l2: {
        if (weights.size() != a.size())
          throw DimensionError("metric weight dimension mismatch");
        return std::sqrt(
            (weights.array() * (a - b).array().square()).sum());
      }
      case Kind::manhattan:
        return (a - b).cwiseAbs().sum();
      case Kind::zero_one:
        return a == b ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return 0.0;
  }
};

/// Computes the default weighted_l2 weights: inverse per-dimension standard
/// deviation of the demonstrated states. Dimensions with zero spread get
/// 1/eps; the flag output lets callers log that.
inline Vec inverse_sd_weights(const std::vector<Vec>& states,
                              bool* degenerate = nullptr, double eps = 1e-6) {
  if (states.empty()) throw ConfigError("no states for metric weights");
  const int d = static_cast<int>(states.front().size());
  Vec mean = Vec::Zero(d), sq = Vec::Zero(d);
  for (const Vec& s : states) {
    mean += s;
    sq += s.cwiseProduct(s);
  }
  mean /= static_cast<double>(states.size());
  Vec var = sq / static_cast<double>(states.size()) - mean.cwiseProduct(mean);
  if (degenerate) *degenerate = false;
  Vec w(d);
  for (int i = 0; i < d; ++i) {
    double sd = std::sqrt(std::max(var[i], 0.0));
    if (sd <= 0.0) {
      w[i] = 1.0 / eps;
      if (degenerate) *degenerate = true;
    } else {
      w[i] = 1.0 / sd;
    }
  }
  return w;
}

/// Monotone bijection on [0, inf) with phi(0) = 0; sets the decay rate of
/// the localization.
struct Bijection {
  enum class Kind { linear, square };
  Kind kind = Kind::linear;
  double h = 1.0;

  static Bijection linear(double h) { return make(Kind::linear, h); }
  static Bijection square(double h) { return make(Kind::square, h); }

  double operator()(double d) const {
    return kind == Kind::linear ? h * d : h * d * d;
  }

 private:
  static Bijection make(Kind k, double h) {
    if (h <= 0) throw ConfigError("bijection slope must be positive");
    Bijection b;
    b.kind = k;
    b.h = h;
    return b;
  }
};

/// lambda(s) = exp(-phi(d(s, support))): 1 exactly on the demonstrated
/// states, decaying with distance from them. Immutable after construction,
/// safe for concurrent reads.
class LambdaEvaluator {
 public:
  LambdaEvaluator(DistanceMetric metric, Bijection phi,
                  std::vector<Vec> support)
      : metric_(std::move(metric)),
        phi_(phi),
        support_(std::move(support)) {
    if (support_.empty()) throw ConfigError("lambda support must be nonempty");
  }

  double distance(const Vec& s) const {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec& x : support_)
      best = std::min(best, metric_.point_distance(s, x));
    return best;
  }

  double eval(const Vec& s) const {
    double d = distance(s);
    if (std::isinf(d)) return 0.0;
    return std::exp(-phi_(d));
  }

  Vec eval_batch(const std::vector<Vec>& states) const {
    Vec out(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) out[i] = eval(states[i]);
    return out;
  }

  const std::vector<Vec>& support() const { return support_; }
  const DistanceMetric& metric() const { return metric_; }
  const Bijection& bijection() const { return phi_; }

 private:
  DistanceMetric metric_;
  Bijection phi_;
  std::vector<Vec> support_;
};

}  // namespace learnsam

#endif  // LEARNSAM_LAMBDA_HPP_
