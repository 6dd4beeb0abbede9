#ifndef LEARNSAM_CONFIG_HPP_
#define LEARNSAM_CONFIG_HPP_

#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "learnsam/demo.hpp"
#include "learnsam/envs.hpp"
#include "learnsam/sam.hpp"

namespace learnsam {

/// `key = value` lines, '#' comments. Unknown keys are rejected when the
/// run configuration is resolved, so typos fail fast instead of silently
/// using a default.
class KeyValueConfig {
 public:
  static KeyValueConfig from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    KeyValueConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      std::size_t hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      line = trim(line);
      if (line.empty()) continue;
      std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(line_no) +
                          ": expected key = value");
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("empty config key");
    values_[key] = value;
  }

  /// Applies a "key=value" override (the --set form).
  void set_pair(const std::string& pair) {
    std::size_t eq = pair.find('=');
    if (eq == std::string::npos)
      throw ConfigError("override must look like key=value: " + pair);
    set(trim(pair.substr(0, eq)), trim(pair.substr(eq + 1)));
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  double get_double(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    char* end = nullptr;
    double v = std::strtod(it->second.c_str(), &end);
    if (end == it->second.c_str())
      throw ConfigError("bad number for " + key + ": " + it->second);
    return v;
  }
  long long get_int(const std::string& key, long long dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    try {
      return std::stoll(it->second);
    } catch (...) {
      throw ConfigError("bad integer for " + key + ": " + it->second);
    }
  }
  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError("bad boolean for " + key + ": " + it->second);
  }
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<double> out;
    for (const std::string& field : split(it->second, ','))
      out.push_back(std::strtod(trim(field).c_str(), nullptr));
    return out;
  }
  std::vector<int> get_ints(const std::string& key,
                            const std::vector<int>& dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<int> out;
    for (const std::string& field : split(it->second, ','))
      out.push_back(std::stoi(trim(field)));
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

enum class Method { learn_sam, trpo, pretrain, naive_ensemble };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::learn_sam: return "learn_sam";
    case Method::trpo: return "trpo";
    case Method::pretrain: return "pretrain";
    case Method::naive_ensemble: return "naive_ensemble";
  }
  return "?";
}

inline Method method_from_name(const std::string& name) {
  if (name == "learn_sam") return Method::learn_sam;
  if (name == "trpo") return Method::trpo;
  if (name == "pretrain") return Method::pretrain;
  if (name == "naive_ensemble") return Method::naive_ensemble;
  throw ConfigError("unknown method: " + name);
}

/// Fully resolved run settings. Defaults that depend on the environment
/// (horizon, epoch size, lambda metric) are filled in here so the echoed
/// configuration states exactly what ran.
struct RunConfig {
  // environment
  std::string env_kind = "gridworld";
  int grid_n = 8;
  std::vector<std::pair<int, int>> walls;
  int horizon = -1;
  double pm_step_size = 0.2;
  double gamma = 0.99;

  // lambda localization
  std::string lambda_metric;  // weighted_l2 | manhattan | zero_one | constant_one
  std::string lambda_phi = "linear";
  double lambda_h = 1.0;

  // split and merge
  bool sam_enabled = true;
  int sam_interval = 1;
  std::string sam_grouping = "softmax";
  double sam_c = 4.0;
  std::vector<double> sam_b;
  int sam_k = 2;
  bool sam_drop_unhelpful = true;
  int sam_score_samples = 32;
  int sam_probes = 100;

  // optimizer
  TrustRegionConfig trpo;
  std::vector<int> policy_hidden = {32, 32};
  std::vector<int> value_hidden = {32, 32};
  double init_log_sigma = std::log(0.5);
  ValueFitConfig value_fit;

  // demonstrations
  int demo_m = 1;
  double demo_noise_sd = 0.3;
  int demo_n_pairs = 500;
  std::string demo_file;
  ExpertTrainConfig expert_fit;
  ReferenceTrainConfig expert_train;

  // pre-train baseline
  int bc_iters = 200;
  double bc_lr = 1e-2;

  // budget and evaluation
  int steps_per_epoch = -1;
  long long total_steps = -1;
  int epochs = 50;
  int eval_episodes = 10;
  double early_stop_reward = std::numeric_limits<double>::infinity();
  std::uint64_t seed = 0;

  std::unique_ptr<Environment> make_environment() const {
    if (env_kind == "gridworld")
      return std::make_unique<GridWorld>(grid_n, walls, horizon, gamma);
    if (env_kind == "pointmass")
      return std::make_unique<PointMass>(pm_step_size,
                                         horizon > 0 ? horizon : 100, gamma);
    throw ConfigError("unknown env.kind: " + env_kind);
  }

  int resolved_steps_per_epoch() const {
    if (steps_per_epoch > 0) return steps_per_epoch;
    return env_kind == "pointmass" ? 4096 : 2048;
  }

  int resolved_epochs() const {
    if (total_steps > 0)
      return static_cast<int>((total_steps + resolved_steps_per_epoch() - 1) /
                              resolved_steps_per_epoch());
    return epochs;
  }

  std::string resolved_lambda_metric() const {
    if (!lambda_metric.empty()) return lambda_metric;
    return env_kind == "pointmass" ? "weighted_l2" : "manhattan";
  }

  std::vector<double> resolved_sam_b() const {
    if (!sam_b.empty()) return sam_b;
    if (sam_grouping == "softmax") {
      std::vector<double> b(sam_k);
      for (int i = 0; i < sam_k; ++i)
        b[i] = -0.5 + (sam_k == 1 ? 0.0 : i * 1.0 / (sam_k - 1));
      return b;  // default (-0.5, 0.5) for K = 2
    }
    std::vector<double> cuts(sam_k - 1);
    for (int i = 0; i + 1 < sam_k; ++i) cuts[i] = 0.0 + i;
    return cuts;
  }

  GroupingConfig grouping_config() const {
    std::vector<double> b = resolved_sam_b();
    Vec bv = Eigen::Map<const Vec>(b.data(), b.size());
    if (sam_grouping == "softmax") return GroupingConfig::softmax(sam_c, bv);
    if (sam_grouping == "normal_cdf")
      return GroupingConfig::normal_cdf(sam_c, bv);
    throw ConfigError("unknown sam.grouping: " + sam_grouping);
  }
};

namespace detail {
inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "env.kind", "env.n", "env.horizon", "env.walls", "env.step_size",
      "gamma",
      "lambda.metric", "lambda.phi", "lambda.h",
      "sam.enabled", "sam.interval", "sam.grouping", "sam.c", "sam.b",
      "sam.k", "sam.drop_unhelpful", "sam.score_samples", "sam.probes",
      "trpo.delta", "trpo.cg_iters", "trpo.damping", "trpo.backtrack_coef",
      "trpo.max_backtracks", "trpo.gae_lambda", "trpo.normalize_adv",
      "trpo.kl_samples", "trpo.fisher_samples", "trpo.fvp_row_budget",
      "policy.hidden", "policy.init_log_sigma",
      "value.hidden", "value.iters", "value.lr",
      "demo.m", "demo.noise_sd", "demo.n_pairs", "demo.file",
      "expert.analytic", "expert.epochs", "expert.steps_per_epoch",
      "expert.target", "expert.smoothing", "expert.sigma_floor",
      "pretrain.iters", "pretrain.lr",
      "budget.steps_per_epoch", "budget.total_steps", "budget.epochs",
      "eval.episodes", "early_stop.reward", "seed",
      "baseline.kind",
      "sweep.axis", "sweep.values", "sweep.methods", "sweep.seeds",
      "metric.threshold",
  };
  return keys;
}
}  // namespace detail

inline RunConfig resolve_config(const KeyValueConfig& kv) {
  for (const auto& [key, value] : kv.values())
    if (!detail::known_keys().count(key))
      throw ConfigError("unknown config key: " + key);

  RunConfig cfg;
  cfg.env_kind = kv.get_string("env.kind", cfg.env_kind);
  cfg.grid_n = static_cast<int>(kv.get_int("env.n", cfg.grid_n));
  cfg.horizon = static_cast<int>(kv.get_int("env.horizon", cfg.horizon));
  cfg.pm_step_size = kv.get_double("env.step_size", cfg.pm_step_size);
  cfg.gamma = kv.get_double("gamma", cfg.gamma);
  if (kv.has("env.walls")) {
    for (const std::string& cell : split(kv.get_string("env.walls", ""), ';')) {
      if (trim(cell).empty()) continue;
      auto xy = split(trim(cell), ':');
      if (xy.size() != 2) throw ConfigError("env.walls wants x:y;x:y cells");
      cfg.walls.emplace_back(std::stoi(xy[0]), std::stoi(xy[1]));
    }
  }

  cfg.lambda_metric = kv.get_string("lambda.metric", cfg.lambda_metric);
  cfg.lambda_phi = kv.get_string("lambda.phi", cfg.lambda_phi);
  cfg.lambda_h = kv.get_double("lambda.h", cfg.lambda_h);

  cfg.sam_enabled = kv.get_bool("sam.enabled", cfg.sam_enabled);
  cfg.sam_interval = static_cast<int>(kv.get_int("sam.interval", cfg.sam_interval));
  cfg.sam_grouping = kv.get_string("sam.grouping", cfg.sam_grouping);
  cfg.sam_c = kv.get_double("sam.c", cfg.sam_c);
  cfg.sam_b = kv.get_doubles("sam.b", cfg.sam_b);
  cfg.sam_k = static_cast<int>(kv.get_int("sam.k", cfg.sam_k));
  cfg.sam_drop_unhelpful = kv.get_bool("sam.drop_unhelpful", cfg.sam_drop_unhelpful);
  cfg.sam_score_samples =
      static_cast<int>(kv.get_int("sam.score_samples", cfg.sam_score_samples));
  cfg.sam_probes = static_cast<int>(kv.get_int("sam.probes", cfg.sam_probes));

  cfg.trpo.delta = kv.get_double("trpo.delta", cfg.trpo.delta);
  cfg.trpo.cg_iters = static_cast<int>(kv.get_int("trpo.cg_iters", cfg.trpo.cg_iters));
  cfg.trpo.damping = kv.get_double("trpo.damping", cfg.trpo.damping);
  cfg.trpo.backtrack_coef =
      kv.get_double("trpo.backtrack_coef", cfg.trpo.backtrack_coef);
  cfg.trpo.max_backtracks =
      static_cast<int>(kv.get_int("trpo.max_backtracks", cfg.trpo.max_backtracks));
  cfg.trpo.gamma = cfg.gamma;
  cfg.trpo.gae_lambda = kv.get_double("trpo.gae_lambda", cfg.trpo.gae_lambda);
  cfg.trpo.normalize_advantages =
      kv.get_bool("trpo.normalize_adv", cfg.trpo.normalize_advantages);
  cfg.trpo.kl_samples =
      static_cast<int>(kv.get_int("trpo.kl_samples", cfg.trpo.kl_samples));
  cfg.trpo.fisher_samples =
      static_cast<int>(kv.get_int("trpo.fisher_samples", cfg.trpo.fisher_samples));
  cfg.trpo.fvp_row_budget =
      static_cast<int>(kv.get_int("trpo.fvp_row_budget", cfg.trpo.fvp_row_budget));

  cfg.policy_hidden = kv.get_ints("policy.hidden", cfg.policy_hidden);
  cfg.init_log_sigma = kv.get_double("policy.init_log_sigma", cfg.init_log_sigma);
  cfg.value_hidden = kv.get_ints("value.hidden", cfg.value_hidden);
  cfg.value_fit.iters = static_cast<int>(kv.get_int("value.iters", cfg.value_fit.iters));
  cfg.value_fit.lr = kv.get_double("value.lr", cfg.value_fit.lr);

  cfg.demo_m = static_cast<int>(kv.get_int("demo.m", cfg.demo_m));
  cfg.demo_noise_sd = kv.get_double("demo.noise_sd", cfg.demo_noise_sd);
  cfg.demo_n_pairs = static_cast<int>(kv.get_int("demo.n_pairs", cfg.demo_n_pairs));
  cfg.demo_file = kv.get_string("demo.file", cfg.demo_file);

  cfg.expert_train.analytic =
      kv.get_bool("expert.analytic", cfg.env_kind == "gridworld");
  cfg.expert_train.epochs =
      static_cast<int>(kv.get_int("expert.epochs", cfg.expert_train.epochs));
  cfg.expert_train.steps_per_epoch = static_cast<int>(
      kv.get_int("expert.steps_per_epoch", cfg.expert_train.steps_per_epoch));
  cfg.expert_train.target_return =
      kv.get_double("expert.target", cfg.expert_train.target_return);
  cfg.expert_train.trpo = cfg.trpo;
  cfg.expert_fit.smoothing_alpha =
      kv.get_double("expert.smoothing", cfg.expert_fit.smoothing_alpha);
  cfg.expert_fit.sigma_floor =
      kv.get_double("expert.sigma_floor", cfg.expert_fit.sigma_floor);

  cfg.bc_iters = static_cast<int>(kv.get_int("pretrain.iters", cfg.bc_iters));
  cfg.bc_lr = kv.get_double("pretrain.lr", cfg.bc_lr);

  cfg.steps_per_epoch =
      static_cast<int>(kv.get_int("budget.steps_per_epoch", cfg.steps_per_epoch));
  cfg.total_steps = kv.get_int("budget.total_steps", cfg.total_steps);
  cfg.epochs = static_cast<int>(kv.get_int("budget.epochs", cfg.epochs));
  cfg.eval_episodes = static_cast<int>(kv.get_int("eval.episodes", cfg.eval_episodes));
  cfg.early_stop_reward = kv.get_double("early_stop.reward", cfg.early_stop_reward);
  cfg.seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));

  if (cfg.epochs <= 0 && cfg.total_steps <= 0)
    throw ConfigError("budget must be positive");
  if (cfg.gamma <= 0.0 || cfg.gamma > 1.0)
    throw ConfigError("gamma must lie in (0, 1]");
  cfg.grouping_config();  // validates grouping hyperparameters
  return cfg;
}

/// Full resolved settings echoed in key = value form, sorted, exact doubles.
inline std::string resolved_text(const RunConfig& cfg) {
  std::map<std::string, std::string> out;
  auto join_ints = [](const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
      s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  out["env.kind"] = cfg.env_kind;
  out["env.n"] = std::to_string(cfg.grid_n);
  out["env.horizon"] =
      std::to_string(cfg.horizon > 0 ? cfg.horizon
                     : (cfg.env_kind == "pointmass" ? 100 : 4 * cfg.grid_n));
  {
    std::string cells;
    for (std::size_t i = 0; i < cfg.walls.size(); ++i)
      cells += (i ? ";" : "") + std::to_string(cfg.walls[i].first) + ":" +
               std::to_string(cfg.walls[i].second);
    out["env.walls"] = cells;
  }
  out["env.step_size"] = format_double(cfg.pm_step_size);
  out["gamma"] = format_double(cfg.gamma);
  out["lambda.metric"] = cfg.resolved_lambda_metric();
  out["lambda.phi"] = cfg.lambda_phi;
  out["lambda.h"] = format_double(cfg.lambda_h);
  out["sam.enabled"] = cfg.sam_enabled ? "true" : "false";
  out["sam.interval"] = std::to_string(cfg.sam_interval);
  out["sam.grouping"] = cfg.sam_grouping;
  out["sam.c"] = format_double(cfg.sam_c);
  {
    std::string bs;
    for (double b : cfg.resolved_sam_b())
      bs += (bs.empty() ? "" : ",") + format_double(b);
    out["sam.b"] = bs;
  }
  out["sam.k"] = std::to_string(cfg.sam_k);
  out["sam.drop_unhelpful"] = cfg.sam_drop_unhelpful ? "true" : "false";
  out["sam.score_samples"] = std::to_string(cfg.sam_score_samples);
  out["sam.probes"] = std::to_string(cfg.sam_probes);
  out["trpo.delta"] = format_double(cfg.trpo.delta);
  out["trpo.cg_iters"] = std::to_string(cfg.trpo.cg_iters);
  out["trpo.damping"] = format_double(cfg.trpo.damping);
  out["trpo.backtrack_coef"] = format_double(cfg.trpo.backtrack_coef);
  out["trpo.max_backtracks"] = std::to_string(cfg.trpo.max_backtracks);
  out["trpo.gae_lambda"] = format_double(cfg.trpo.gae_lambda);
  out["trpo.normalize_adv"] = cfg.trpo.normalize_advantages ? "true" : "false";
  out["trpo.kl_samples"] = std::to_string(cfg.trpo.kl_samples);
  out["trpo.fisher_samples"] = std::to_string(cfg.trpo.fisher_samples);
  out["trpo.fvp_row_budget"] = std::to_string(cfg.trpo.fvp_row_budget);
  out["policy.hidden"] = join_ints(cfg.policy_hidden);
  out["policy.init_log_sigma"] = format_double(cfg.init_log_sigma);
  out["value.hidden"] = join_ints(cfg.value_hidden);
  out["value.iters"] = std::to_string(cfg.value_fit.iters);
  out["value.lr"] = format_double(cfg.value_fit.lr);
  out["demo.m"] = std::to_string(cfg.demo_m);
  out["demo.noise_sd"] = format_double(cfg.demo_noise_sd);
  out["demo.n_pairs"] = std::to_string(cfg.demo_n_pairs);
  out["demo.file"] = cfg.demo_file;
  out["expert.analytic"] = cfg.expert_train.analytic ? "true" : "false";
  out["expert.epochs"] = std::to_string(cfg.expert_train.epochs);
  out["expert.steps_per_epoch"] = std::to_string(cfg.expert_train.steps_per_epoch);
  out["expert.target"] = format_double(cfg.expert_train.target_return);
  out["expert.smoothing"] = format_double(cfg.expert_fit.smoothing_alpha);
  out["expert.sigma_floor"] = format_double(cfg.expert_fit.sigma_floor);
  out["pretrain.iters"] = std::to_string(cfg.bc_iters);
  out["pretrain.lr"] = format_double(cfg.bc_lr);
  out["budget.steps_per_epoch"] = std::to_string(cfg.resolved_steps_per_epoch());
  out["budget.epochs"] = std::to_string(cfg.resolved_epochs());
  out["eval.episodes"] = std::to_string(cfg.eval_episodes);
  out["seed"] = std::to_string(cfg.seed);

  std::string text;
  for (const auto& [key, value] : out) text += key + " = " + value + "\n";
  return text;
}

}  // namespace learnsam

#endif  // LEARNSAM_CONFIG_HPP_
