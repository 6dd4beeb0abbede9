#ifndef LEARNSAM_EXPERT_HPP_
#define LEARNSAM_EXPERT_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "learnsam/demonstration.hpp"
#include "learnsam/mdp.hpp"

namespace learnsam {

struct ExpertTrainConfig {
  double smoothing_alpha = 0.1;  // tabular additive smoothing
  double sigma_floor = 0.05;     // continuous expert stddev floor
};

/// Frozen conditional action distribution fit to one demonstration set.
/// Discrete environments get a smoothed tabular model over demonstrated
/// states (uniform off-support); continuous ones a Gaussian whose mean is
/// the least-squares affine fit to the demonstrated actions.
class ExpertPolicy {
 public:
  enum class Kind { tabular, affine_gaussian };

  bool discrete() const { return kind_ == Kind::tabular; }
  Kind kind() const { return kind_; }
  int action_count() const { return n_actions_; }
  const std::vector<Vec>& support_states() const { return support_; }

  Vec action_probs(const Vec& s) const {
    if (!discrete()) throw std::logic_error("action_probs on continuous expert");
    auto it = table_.find(key_of(s));
    if (it == table_.end())
      return Vec::Constant(n_actions_, 1.0 / n_actions_);
    const Vec& counts = it->second;
    double total = counts.sum() + alpha_ * n_actions_;
    return (counts.array() + alpha_) / total;
  }

  /// Probability mass (discrete) or density (continuous).
  double prob(const Vec& s, const ActionValue& a) const {
    if (discrete()) return action_probs(s)[a.index];
    Vec mu = mean(s);
    double p = 1.0;
    for (int i = 0; i < mu.size(); ++i) {
      double z = (a.vector[i] - mu[i]) / sigma_[i];
      p *= std::exp(-0.5 * z * z) / (sigma_[i] * std::sqrt(2.0 * M_PI));
    }
    return p;
  }

  ActionValue sample(const Vec& s, Rng& rng) const {
    if (discrete()) {
      Vec p = action_probs(s);
      double u = rng.uniform(), acc = 0.0;
      for (int i = 0; i < p.size(); ++i) {
        acc += p[i];
        if (u < acc) return ActionValue::of_index(i);
      }
      return ActionValue::of_index(n_actions_ - 1);
    }
    Vec mu = mean(s);
    Vec a(mu.size());
    for (int i = 0; i < mu.size(); ++i) a[i] = mu[i] + sigma_[i] * rng.normal();
    return ActionValue::of_vector(std::move(a));
  }

  ActionValue mode(const Vec& s) const {
    if (discrete()) {
      Vec p = action_probs(s);
      int best = 0;
      p.maxCoeff(&best);
      return ActionValue::of_index(best);
    }
    return ActionValue::of_vector(mean(s));
  }

  Vec mean(const Vec& s) const {
    if (discrete()) throw std::logic_error("mean on discrete expert");
    return w_ * s + b_;
  }
  const Vec& sigma() const { return sigma_; }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["kind"] = discrete() ? "tabular" : "affine_gaussian";
    j["n_actions"] = n_actions_;
    j["support_states"] = pack_states(support_);
    if (discrete()) {
      j["alpha"] = alpha_;
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& [key, counts] : table_) {
        nlohmann::json row;
        row["key"] = key;
        row["counts"] = std::vector<double>(counts.data(),
                                            counts.data() + counts.size());
        rows.push_back(row);
      }
      j["table"] = rows;
    } else {
      j["w"] = pack_matrix(w_);
      j["b"] = std::vector<double>(b_.data(), b_.data() + b_.size());
      j["sigma"] = std::vector<double>(sigma_.data(),
                                       sigma_.data() + sigma_.size());
    }
    return j;
  }

  static ExpertPolicy from_json(const nlohmann::json& j) {
    ExpertPolicy e;
    e.n_actions_ = j.at("n_actions").get<int>();
    e.support_ = unpack_states(j.at("support_states"));
    if (j.at("kind") == "tabular") {
      e.kind_ = Kind::tabular;
      e.alpha_ = j.at("alpha").get<double>();
      for (const auto& row : j.at("table")) {
        std::vector<long long> key = row.at("key").get<std::vector<long long>>();
        std::vector<double> counts = row.at("counts").get<std::vector<double>>();
        e.table_[key] = Eigen::Map<const Vec>(counts.data(), counts.size());
      }
    } else {
      e.kind_ = Kind::affine_gaussian;
      e.w_ = unpack_matrix(j.at("w"));
      std::vector<double> b = j.at("b").get<std::vector<double>>();
      std::vector<double> sig = j.at("sigma").get<std::vector<double>>();
      e.b_ = Eigen::Map<const Vec>(b.data(), b.size());
      e.sigma_ = Eigen::Map<const Vec>(sig.data(), sig.size());
    }
    return e;
  }

  friend ExpertPolicy pretrain_expert(const DemonstrationSet&,
                                      const EnvironmentSpec&,
                                      const ExpertTrainConfig&);

 private:
  static std::vector<long long> key_of(const Vec& s) {
    std::vector<long long> k(s.size());
    for (int i = 0; i < s.size(); ++i) k[i] = std::llround(s[i]);
    return k;
  }
  static nlohmann::json pack_states(const std::vector<Vec>& states) {
    nlohmann::json arr = nlohmann::json::array();
    for (const Vec& s : states)
      arr.push_back(std::vector<double>(s.data(), s.data() + s.size()));
    return arr;
  }
  static std::vector<Vec> unpack_states(const nlohmann::json& arr) {
    std::vector<Vec> out;
    for (const auto& row : arr) {
      std::vector<double> v = row.get<std::vector<double>>();
      out.push_back(Eigen::Map<const Vec>(v.data(), v.size()));
    }
    return out;
  }
  static nlohmann::json pack_matrix(const Mat& m) {
    nlohmann::json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    j["data"] = std::vector<double>(m.data(), m.data() + m.size());
    return j;
  }
  static Mat unpack_matrix(const nlohmann::json& j) {
    std::vector<double> data = j.at("data").get<std::vector<double>>();
    return Eigen::Map<const Mat>(data.data(), j.at("rows").get<int>(),
                                 j.at("cols").get<int>());
  }

  Kind kind_ = Kind::tabular;
  int n_actions_ = 0;
  std::vector<Vec> support_;
  // tabular
  std::map<std::vector<long long>, Vec> table_;
  double alpha_ = 0.0;
  // affine gaussian
  Mat w_;
  Vec b_, sigma_;
};

/// Supervised fit of an expert policy to a demonstration set.
inline ExpertPolicy pretrain_expert(const DemonstrationSet& demo,
                                    const EnvironmentSpec& spec,
                                    const ExpertTrainConfig& cfg = {}) {
  if (demo.empty()) throw std::invalid_argument("empty demonstration");
  ExpertPolicy e;
  e.support_ = demo.states();
  if (spec.action_kind == ActionKind::discrete) {
    e.kind_ = ExpertPolicy::Kind::tabular;
    e.n_actions_ = spec.action_dim_or_count;
    e.alpha_ = cfg.smoothing_alpha;
    for (const auto& [s, a] : demo.pairs) {
      Vec& counts = e.table_
                        .try_emplace(ExpertPolicy::key_of(s),
                                     Vec::Zero(e.n_actions_))
                        .first->second;
      counts[a.index] += 1.0;
    }
  } else {
    e.kind_ = ExpertPolicy::Kind::affine_gaussian;
    e.n_actions_ = spec.action_dim_or_count;
    const int n = static_cast<int>(demo.pairs.size());
    const int d = spec.state_dim;
    Mat x(n, d + 1);
    Mat y(n, e.n_actions_);
    for (int i = 0; i < n; ++i) {
      x.row(i).head(d) = demo.pairs[i].first.transpose();
      x(i, d) = 1.0;
      y.row(i) = demo.pairs[i].second.vector.transpose();
    }
    Mat coef = x.colPivHouseholderQr().solve(y);  // (d+1) x action_dim
    e.w_ = coef.topRows(d).transpose();
    e.b_ = coef.row(d).transpose();
    Mat resid = y - x * coef;
    e.sigma_ = Vec(e.n_actions_);
    for (int c = 0; c < e.n_actions_; ++c) {
      double sd = std::sqrt(resid.col(c).squaredNorm() / n);
      e.sigma_[c] = std::max(sd, cfg.sigma_floor);
    }
  }
  return e;
}

inline void save_expert_json(const ExpertPolicy& e, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << e.to_json().dump(2) << "\n";
}

inline ExpertPolicy load_expert_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return ExpertPolicy::from_json(j);
}

}  // namespace learnsam

#endif  // LEARNSAM_EXPERT_HPP_
