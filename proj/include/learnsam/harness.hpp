#ifndef LEARNSAM_HARNESS_HPP_
#define LEARNSAM_HARNESS_HPP_

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "learnsam/config.hpp"
#include "learnsam/demo.hpp"
#include "learnsam/sam.hpp"

namespace learnsam {

struct EpochRecord {
  int epoch = 0;  // 1-based
  long long env_steps = 0;
  double eval_reward = 0.0;
  double train_reward = 0.0;
  double expert_free_weight = 1.0;
  double kl = 0.0;
  double surrogate_improve = 0.0;
  int accepted = 0;
  int sam_applied = 0;
  double sam_dev = 0.0;
  double wall_seconds = 0.0;  // sidecar timing.csv, not part of log.csv
};

struct TrainingLog {
  std::string method;
  double demo_quality = std::numeric_limits<double>::quiet_NaN();
  std::vector<EpochRecord> records;
};

/// log.csv holds only deterministic columns so that equal-seed runs produce
/// byte-identical files; wall-clock goes to timing.csv.
inline std::string log_csv_text(const TrainingLog& log) {
  std::string text =
      "epoch,env_steps,env_steps_10k,eval_reward,train_reward,"
      "expert_free_weight,kl,surrogate_improve,accepted,sam_applied,sam_dev\n";
  for (const EpochRecord& r : log.records) {
    text += std::to_string(r.epoch) + "," + std::to_string(r.env_steps) + "," +
            format_double(r.env_steps / 10000.0) + "," +
            format_double(r.eval_reward) + "," + format_double(r.train_reward) +
            "," + format_double(r.expert_free_weight) + "," +
            format_double(r.kl) + "," + format_double(r.surrogate_improve) +
            "," + std::to_string(r.accepted) + "," +
            std::to_string(r.sam_applied) + "," + format_double(r.sam_dev) +
            "\n";
  }
  return text;
}

inline void write_log_csv(const TrainingLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << log_csv_text(log);
}

inline void write_timing_csv(const TrainingLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "epoch,wall_seconds\n";
  for (const EpochRecord& r : log.records)
    out << r.epoch << "," << format_double(r.wall_seconds) << "\n";
}

/// First 1-based epoch whose evaluation reward reaches the threshold;
/// -1 when censored (never reached). A threshold at or below zero asks for
/// the first strictly positive evaluation (sparse-reward convention).
inline int iterations_to_threshold(const TrainingLog& log, double threshold) {
  for (const EpochRecord& r : log.records) {
    bool crossed = threshold > 0.0 ? r.eval_reward >= threshold
                                   : r.eval_reward > 0.0;
    if (crossed) return r.epoch;
  }
  return -1;
}

/// True when evaluation reward has plateaued: every adjacent change within
/// the trailing window is below eps. Logs shorter than the window are not
/// considered converged.
inline bool convergence_check(const TrainingLog& log, int window, double eps) {
  if (window < 2) throw std::invalid_argument("window must be >= 2");
  const int n = static_cast<int>(log.records.size());
  if (n < window) return false;
  for (int i = n - window + 1; i < n; ++i)
    if (std::abs(log.records[i].eval_reward - log.records[i - 1].eval_reward) >=
        eps)
      return false;
  return true;
}

// -- training loop internals --------------------------------------------------

namespace detail {

inline DistanceMetric make_metric(const RunConfig& cfg,
                                  const std::vector<Vec>& all_demo_states,
                                  bool* degenerate) {
  const std::string name = cfg.resolved_lambda_metric();
  if (name == "manhattan") return DistanceMetric::manhattan();
  if (name == "zero_one") return DistanceMetric::zero_one();
  if (name == "weighted_l2")
    return DistanceMetric::weighted_l2(
        inverse_sd_weights(all_demo_states, degenerate));
  throw ConfigError("unknown lambda.metric: " + name);
}

inline Bijection make_bijection(const RunConfig& cfg) {
  if (cfg.lambda_phi == "linear") return Bijection::linear(cfg.lambda_h);
  if (cfg.lambda_phi == "square") return Bijection::square(cfg.lambda_h);
  throw ConfigError("unknown lambda.phi: " + cfg.lambda_phi);
}

/// Experts plus their localization evaluators. The metric (and its
/// weighted_l2 weights) is shared across experts so that support unions
/// keep the closure identity exact. `constant_one` yields null evaluators,
/// i.e. the plain ensemble.
inline void build_experts(const RunConfig& cfg, const EnvironmentSpec& spec,
                          const std::vector<DemonstrationSet>& demos,
                          bool constant_lambda,
                          std::vector<ExpertPolicy>* experts,
                          std::vector<std::shared_ptr<const LambdaEvaluator>>*
                              lambdas) {
  if (demos.empty()) return;
  std::vector<Vec> all_states;
  for (const DemonstrationSet& d : demos) {
    auto s = d.states();
    all_states.insert(all_states.end(), s.begin(), s.end());
  }
  bool degenerate = false;
  for (const DemonstrationSet& demo : demos) {
    experts->push_back(pretrain_expert(demo, spec, cfg.expert_fit));
    if (constant_lambda || cfg.resolved_lambda_metric() == "constant_one") {
      lambdas->push_back(nullptr);
    } else {
      lambdas->push_back(std::make_shared<LambdaEvaluator>(
          make_metric(cfg, all_states, &degenerate), make_bijection(cfg),
          demo.states()));
    }
  }
  if (degenerate)
    std::fprintf(stderr,
                 "[learnsam] weighted_l2: zero-spread state dimension, "
                 "using weight 1/eps\n");
}

/// Supervised fit of the expert-free policy to the demonstration pairs
/// (the pre-train baseline's initialization).
inline void behavior_clone(DifferentiablePolicy& policy,
                           const std::vector<DemonstrationSet>& demos,
                           int iters, double lr) {
  std::vector<const std::pair<Vec, ActionValue>*> pairs;
  for (const DemonstrationSet& d : demos)
    for (const auto& pr : d.pairs) pairs.push_back(&pr);
  if (pairs.empty()) return;
  Adam adam(policy.param_count(), lr);
  Vec params = policy.trainable_params();
  for (int it = 0; it < iters; ++it) {
    policy.set_trainable_params(params);
    Vec grad = Vec::Zero(policy.param_count());
    for (const auto* pr : pairs)
      grad -= policy.log_prob_grad(pr->first, pr->second);
    grad /= static_cast<double>(pairs.size());
    adam.apply(params, grad);
  }
  policy.set_trainable_params(params);
}

inline double one_step_q(const Environment& env, const ValueFunction& value,
                         double gamma, const Vec& s, const ActionValue& a) {
  Transition tr = env.step(s, a);
  return tr.reward + gamma * (tr.done ? 0.0 : value.predict(tr.next_state));
}

/// Per-expert aggregated scores (lambda-weighted over the batch states) and
/// mean lambdas; the two inputs of one split-and-merge application.
inline std::pair<Vec, Vec> sam_aggregates(const EnsemblePolicy& ens,
                                          const Environment& env,
                                          const ValueFunction& value,
                                          const std::vector<Vec>& states,
                                          const RunConfig& cfg, Rng& rng) {
  const int n_experts = ens.expert_count();
  const int n_actions = ens.action_count();
  Vec psi_weighted = Vec::Zero(n_experts);
  Vec lam_sum = Vec::Zero(n_experts);

  // model-backed Q over every (state, action), value net run as one batch
  Mat q_table;
  if (ens.discrete()) {
    std::vector<Vec> next_states;
    std::vector<double> rewards;
    std::vector<char> done;
    next_states.reserve(states.size() * n_actions);
    for (const Vec& s : states)
      for (int a = 0; a < n_actions; ++a) {
        Transition tr = env.step(s, ActionValue::of_index(a));
        next_states.push_back(tr.next_state);
        rewards.push_back(tr.reward);
        done.push_back(tr.done);
      }
    Vec v_next = value.predict_batch(next_states);
    q_table = Mat(states.size(), n_actions);
    for (std::size_t i = 0; i < next_states.size(); ++i)
      q_table(i / n_actions, i % n_actions) =
          rewards[i] + cfg.gamma * (done[i] ? 0.0 : v_next[i]);
  }

  for (std::size_t si = 0; si < states.size(); ++si) {
    const Vec& s = states[si];
    Vec lam(n_experts);
    for (int k = 0; k < n_experts; ++k) lam[k] = ens.lambda_value(k, s);
    Vec psi(n_experts);
    if (ens.discrete()) {
      Vec q = q_table.row(si).transpose();
      Vec acting = ens.action_probs(s);
      for (int k = 0; k < n_experts; ++k)
        psi[k] = score_from_q(q, acting, ens.expert_action_probs(k, s));
    } else {
      const int n_draw = cfg.sam_score_samples;
      Vec q_act(n_draw);
      for (int i = 0; i < n_draw; ++i)
        q_act[i] = one_step_q(env, value, cfg.gamma, s, ens.sample(s, rng));
      for (int k = 0; k < n_experts; ++k) {
        Vec q_exp(n_draw);
        for (int i = 0; i < n_draw; ++i)
          q_exp[i] =
              one_step_q(env, value, cfg.gamma, s, ens.expert_sample(k, s, rng));
        psi[k] = score_mc(q_exp, q_act);
      }
    }
    for (int k = 0; k < n_experts; ++k) {
      psi_weighted[k] += lam[k] * psi[k];
      lam_sum[k] += lam[k];
    }
  }
  Vec psi_bar(n_experts), lam_bar(n_experts);
  for (int k = 0; k < n_experts; ++k) {
    psi_bar[k] = lam_sum[k] > 0.0 ? psi_weighted[k] / lam_sum[k] : 0.0;
    lam_bar[k] = states.empty() ? 0.0
                                : lam_sum[k] / static_cast<double>(states.size());
  }
  return {psi_bar, lam_bar};
}

inline std::vector<std::pair<Vec, ActionValue>> make_probes(
    const EnsemblePolicy& ens, const std::vector<Vec>& states, int count) {
  std::vector<std::pair<Vec, ActionValue>> probes;
  if (states.empty() || count <= 0) return probes;
  const int per_state = ens.discrete() ? ens.action_count() : 1;
  const int want_states = std::max(1, count / per_state);
  const int stride =
      std::max<std::size_t>(1, states.size() / want_states);
  for (std::size_t i = 0; i < states.size(); i += stride) {
    const Vec& s = states[i];
    if (ens.discrete()) {
      for (int a = 0; a < ens.action_count(); ++a)
        probes.emplace_back(s, ActionValue::of_index(a));
    } else {
      probes.emplace_back(s, ens.mode(s));
    }
    if (static_cast<int>(probes.size()) >= count) break;
  }
  return probes;
}

}  // namespace detail

/// Demonstrations exactly as a training run would build them: loaded from
/// demo.file when set, otherwise sampled from the reference expert on the
/// run's demo stream.
inline std::vector<DemonstrationSet> build_demos(const RunConfig& cfg,
                                                 const Environment& env) {
  std::vector<DemonstrationSet> demos;
  if (cfg.demo_m <= 0) return demos;
  const EnvironmentSpec& spec = env.spec();
  if (!cfg.demo_file.empty()) {
    demos.push_back(
        load_demo_csv(cfg.demo_file, spec.state_dim, spec.action_kind));
    return demos;
  }
  ReferenceExpert expert =
      train_reference_expert(env, cfg.expert_train, cfg.seed);
  Rng rng_demo = Rng::stream(cfg.seed, "demo");
  for (int j = 0; j < cfg.demo_m; ++j)
    demos.push_back(sample_demonstration(expert, env, cfg.demo_noise_sd,
                                         cfg.demo_n_pairs, rng_demo));
  return demos;
}

/// One full training run (the per-epoch loop shared by every method):
/// pretrain experts from the demonstrations, build the ensemble, then per
/// epoch collect data, refit the value function, estimate advantages,
/// apply split-and-merge (when enabled), and take one trust-region step.
/// The trpo baseline is exactly this loop with zero demonstrations and the
/// reparameterization off; pretrain additionally clones the expert-free
/// policy to the demonstration before epoch 1; naive_ensemble uses
/// constant-one localization and no reparameterization.
inline TrainingLog run_training(
    const RunConfig& cfg, Method method,
    const std::vector<DemonstrationSet>* demos_in = nullptr) {
  std::unique_ptr<Environment> env = cfg.make_environment();
  const EnvironmentSpec& spec = env->spec();
  Rng rng_init = Rng::stream(cfg.seed, "init");
  Rng rng_train = Rng::stream(cfg.seed, "train");
  Rng rng_eval = Rng::stream(cfg.seed, "eval");

  const bool wants_demos = method != Method::trpo && cfg.demo_m > 0;
  std::vector<DemonstrationSet> demos;
  if (wants_demos) demos = demos_in ? *demos_in : build_demos(cfg, *env);

  std::vector<ExpertPolicy> experts;
  std::vector<std::shared_ptr<const LambdaEvaluator>> lambdas;
  const bool ensemble_method =
      method == Method::learn_sam || method == Method::naive_ensemble;
  if (ensemble_method)
    detail::build_experts(cfg, spec, demos,
                          method == Method::naive_ensemble, &experts, &lambdas);

  StateScaler scaler =
      StateScaler::from_bounds(spec.state_low, spec.state_high);
  std::unique_ptr<DifferentiablePolicy> free_policy;
  if (spec.action_kind == ActionKind::discrete)
    free_policy = std::make_unique<CategoricalMlpPolicy>(
        spec.state_dim, cfg.policy_hidden, spec.action_dim_or_count, scaler,
        rng_init);
  else
    free_policy = std::make_unique<GaussianMlpPolicy>(
        spec.state_dim, cfg.policy_hidden, spec.action_dim_or_count, scaler,
        rng_init, cfg.init_log_sigma);
  if (method == Method::pretrain && !demos.empty())
    detail::behavior_clone(*free_policy, demos, cfg.bc_iters, cfg.bc_lr);
  ValueFunction value(spec.state_dim, cfg.value_hidden, scaler, rng_init);

  EnsemblePolicy ensemble(std::move(free_policy), std::move(experts),
                          std::move(lambdas));

  TrainingLog log;
  log.method = method_name(method);
  if (!demos.empty()) {
    double q = 0.0;
    for (const DemonstrationSet& d : demos) q += d.source_quality;
    log.demo_quality = q / demos.size();
  }

  const bool sam_on =
      method == Method::learn_sam && cfg.sam_enabled && cfg.sam_interval > 0;
  const GroupingConfig grouping = cfg.grouping_config();
  const int n_epochs = cfg.resolved_epochs();
  const int steps_per_epoch = cfg.resolved_steps_per_epoch();
  long long total_steps = 0;

  for (int epoch = 1; epoch <= n_epochs; ++epoch) {
    auto tic = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;

    std::vector<Trajectory> trajs =
        collect_episodes(*env, ensemble.sampler(), steps_per_epoch, rng_train);
    double collected_reward = 0.0;
    for (const Trajectory& t : trajs) {
      total_steps += t.total_steps;
      collected_reward += aggregated_reward(t);
    }
    rec.env_steps = total_steps;
    rec.train_reward = collected_reward / trajs.size();

    StepData data = flatten_batch(trajs, ensemble, Vec());
    fit_value(value, trajs, cfg.gamma, cfg.value_fit);
    AdvantageBatch adv =
        estimate_advantages(trajs, value, cfg.gamma, cfg.trpo.gae_lambda,
                            cfg.trpo.normalize_advantages);
    data.advantages = adv.advantages;

    if (sam_on && ensemble.expert_count() > 0 &&
        epoch % cfg.sam_interval == 0) {
      auto [psi_bar, lam_bar] =
          detail::sam_aggregates(ensemble, *env, value, data.states, cfg,
                                 rng_train);
      auto probes = detail::make_probes(ensemble, data.states, cfg.sam_probes);
      SamApplyResult result =
          sam_apply(ensemble, psi_bar, lam_bar, grouping,
                    cfg.sam_drop_unhelpful, probes);
      ensemble = result.ensemble;
      rec.sam_applied = 1;
      rec.sam_dev = result.invariance_dev;
    }

    StepReport step = trust_region_step(ensemble, data, cfg.trpo, rng_train);
    rec.kl = step.kl;
    rec.surrogate_improve = step.surrogate_after - step.surrogate_before;
    rec.accepted = step.accepted ? 1 : 0;

    rec.eval_reward = evaluate_deterministic(
        *env, [&](const Vec& s) { return ensemble.mode(s); },
        cfg.eval_episodes, rng_eval);
    double free_weight = 0.0;
    for (const Vec& s : data.states)
      free_weight += ensemble.expert_free_coefficient(s);
    rec.expert_free_weight = free_weight / static_cast<double>(data.size());

    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - tic)
            .count();
    log.records.push_back(rec);
    if (rec.eval_reward >= cfg.early_stop_reward) break;
  }
  return log;
}

inline TrainingLog run_learn_sam(const RunConfig& cfg) {
  return run_training(cfg, Method::learn_sam);
}

inline TrainingLog run_baseline(const RunConfig& cfg, Method kind) {
  if (kind == Method::learn_sam)
    throw ConfigError("baseline kind must not be learn_sam");
  return run_training(cfg, kind);
}

// -- sweeps and reports --------------------------------------------------------

struct SweepCell {
  std::string axis;
  double value = 0.0;
  std::string method;
  std::uint64_t seed = 0;
  double final_reward = 0.0;
  int iters_to_demo = -1;  // -1 = censored
  double demo_quality = 0.0;
};

struct MetricReport {
  std::string method;
  std::string axis;
  double value = 0.0;
  int n = 0;
  double final_reward_mean = 0.0;
  double final_reward_sd = 0.0;
  double iters_mean = std::numeric_limits<double>::quiet_NaN();
  double iters_sd = std::numeric_limits<double>::quiet_NaN();
  int censored = 0;
};

struct SweepResult {
  std::vector<SweepCell> cells;
  std::vector<MetricReport> reports;
};

inline MetricReport summarize_cells(const std::vector<SweepCell>& cells) {
  MetricReport rep;
  if (cells.empty()) return rep;
  rep.method = cells.front().method;
  rep.axis = cells.front().axis;
  rep.value = cells.front().value;
  rep.n = static_cast<int>(cells.size());
  double sum = 0.0, sq = 0.0;
  std::vector<double> iters;
  for (const SweepCell& c : cells) {
    sum += c.final_reward;
    sq += c.final_reward * c.final_reward;
    if (c.iters_to_demo < 0)
      ++rep.censored;
    else
      iters.push_back(c.iters_to_demo);
  }
  rep.final_reward_mean = sum / rep.n;
  rep.final_reward_sd =
      std::sqrt(std::max(0.0, sq / rep.n - rep.final_reward_mean *
                                               rep.final_reward_mean));
  if (!iters.empty()) {
    double im = 0.0, isq = 0.0;
    for (double v : iters) {
      im += v;
      isq += v * v;
    }
    rep.iters_mean = im / iters.size();
    rep.iters_sd =
        std::sqrt(std::max(0.0, isq / iters.size() - rep.iters_mean * rep.iters_mean));
  }
  return rep;
}

/// Demo sensitivity sweep: for every axis value x seed, generate the demo
/// variant and run each method at the fixed budget. The quality axis varies
/// the action-noise level; the sparsity axis subsamples one fixed-quality
/// demonstration down to the requested pair count.
inline SweepResult sweep(const RunConfig& cfg, const std::string& axis,
                         const std::vector<double>& values,
                         const std::vector<Method>& methods, int seeds) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  if (axis != "quality" && axis != "sparsity")
    throw ConfigError("sweep.axis must be quality or sparsity");
  SweepResult result;
  int max_pairs = cfg.demo_n_pairs;
  if (axis == "sparsity")
    for (double v : values) max_pairs = std::max(max_pairs, static_cast<int>(v));

  std::map<std::uint64_t, ReferenceExpert> expert_cache;
  for (double value : values) {
    for (int si = 0; si < seeds; ++si) {
      RunConfig cell_cfg = cfg;
      cell_cfg.seed = cfg.seed + static_cast<std::uint64_t>(si);
      if (axis == "quality") cell_cfg.demo_noise_sd = value;
      std::unique_ptr<Environment> env = cell_cfg.make_environment();

      auto it = expert_cache.find(cell_cfg.seed);
      if (it == expert_cache.end())
        it = expert_cache
                 .emplace(cell_cfg.seed,
                          train_reference_expert(*env, cell_cfg.expert_train,
                                                 cell_cfg.seed))
                 .first;
      Rng rng_demo = Rng::stream(cell_cfg.seed, "demo");
      std::vector<DemonstrationSet> demos;
      if (axis == "quality") {
        demos.push_back(sample_demonstration(it->second, *env, value,
                                             cell_cfg.demo_n_pairs, rng_demo));
      } else {
        DemonstrationSet full = sample_demonstration(
            it->second, *env, cell_cfg.demo_noise_sd, max_pairs, rng_demo);
        demos.push_back(sparsify(full, static_cast<int>(value), rng_demo));
        cell_cfg.demo_n_pairs = static_cast<int>(value);
      }

      for (Method method : methods) {
        TrainingLog log = run_training(cell_cfg, method, &demos);
        SweepCell cell;
        cell.axis = axis;
        cell.value = value;
        cell.method = method_name(method);
        cell.seed = cell_cfg.seed;
        cell.final_reward =
            log.records.empty() ? 0.0 : log.records.back().eval_reward;
        cell.demo_quality = demos.front().source_quality;
        cell.iters_to_demo =
            iterations_to_threshold(log, demos.front().source_quality);
        result.cells.push_back(cell);
      }
    }
  }

  // aggregate per (method, value)
  for (double value : values)
    for (Method method : methods) {
      std::vector<SweepCell> group;
      for (const SweepCell& c : result.cells)
        if (c.value == value && c.method == method_name(method))
          group.push_back(c);
      result.reports.push_back(summarize_cells(group));
    }
  return result;
}

inline void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "axis,value,method,seed,final_reward,iters_to_demo,censored,"
         "demo_quality\n";
  for (const SweepCell& c : result.cells)
    out << c.axis << "," << format_double(c.value) << "," << c.method << ","
        << c.seed << "," << format_double(c.final_reward) << ","
        << (c.iters_to_demo < 0 ? std::string("")
                                : std::to_string(c.iters_to_demo))
        << "," << (c.iters_to_demo < 0 ? 1 : 0) << ","
        << format_double(c.demo_quality) << "\n";
}

inline void write_metrics_csv(const std::vector<MetricReport>& reports,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "method,axis,value,n,final_reward_mean,final_reward_sd,iters_mean,"
         "iters_sd,censored\n";
  for (const MetricReport& r : reports)
    out << r.method << "," << r.axis << "," << format_double(r.value) << ","
        << r.n << "," << format_double(r.final_reward_mean) << ","
        << format_double(r.final_reward_sd) << ","
        << (std::isnan(r.iters_mean) ? std::string("")
                                     : format_double(r.iters_mean))
        << ","
        << (std::isnan(r.iters_sd) ? std::string("")
                                   : format_double(r.iters_sd))
        << "," << r.censored << "\n";
}

}  // namespace learnsam

#endif  // LEARNSAM_HARNESS_HPP_
