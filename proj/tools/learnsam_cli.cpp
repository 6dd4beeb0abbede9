// Command-line front end: expert training, demonstration generation,
// ensemble training and baselines, sensitivity sweeps, and policy
// evaluation, all driven by a key = value config file with --set overrides.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "learnsam/harness.hpp"
#include "learnsam/serialize.hpp"

namespace fs = std::filesystem;
using namespace learnsam;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::string out_dir = ".";
  long long seed = -1;
};

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "config file (key = value)");
  cmd->add_option("--set", args->sets, "override, key=value (repeatable)");
  cmd->add_option("--seed", args->seed, "seed override");
  cmd->add_option("--out", args->out_dir, "output directory");
}

KeyValueConfig load_kv(const CommonArgs& args) {
  KeyValueConfig kv;
  if (!args.config_path.empty())
    kv = KeyValueConfig::from_file(args.config_path);
  for (const std::string& pair : args.sets) kv.set_pair(pair);
  if (args.seed >= 0) kv.set("seed", std::to_string(args.seed));
  return kv;
}

void write_resolved(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.resolved");
  out << resolved_text(cfg);
}

void write_run_outputs(const RunConfig& cfg, const KeyValueConfig& kv,
                       const TrainingLog& log, const fs::path& dir) {
  write_resolved(cfg, dir);
  write_log_csv(log, (dir / "log.csv").string());
  write_timing_csv(log, (dir / "timing.csv").string());

  double threshold = kv.get_double("metric.threshold", log.demo_quality);
  SweepCell cell;
  cell.method = log.method;
  cell.final_reward = log.records.empty() ? 0.0 : log.records.back().eval_reward;
  cell.demo_quality = log.demo_quality;
  cell.iters_to_demo =
      std::isnan(threshold) ? -1 : iterations_to_threshold(log, threshold);
  write_metrics_csv({summarize_cells({cell})}, (dir / "metrics.csv").string());
}

int cmd_train_expert(const CommonArgs& args) {
  KeyValueConfig kv = load_kv(args);
  RunConfig cfg = resolve_config(kv);
  fs::path dir(args.out_dir);
  write_resolved(cfg, dir);
  std::unique_ptr<Environment> env = cfg.make_environment();
  ReferenceExpert expert =
      train_reference_expert(*env, cfg.expert_train, cfg.seed);
  if (expert.policy) {
    save_policy_json(*expert.policy, (dir / "expert.json").string());
  } else {
    std::ofstream out(dir / "expert.json");
    out << "{\"version\": 1, \"kind\": \"analytic\", \"env\": \""
        << env->spec().id << "\"}\n";
  }
  std::cout << "expert eval_return=" << format_double(expert.eval_return)
            << (expert.budget_exhausted ? " (budget exhausted)" : "") << "\n";
  return expert.budget_exhausted ? 2 : 0;
}

int cmd_gen_demo(const CommonArgs& args) {
  KeyValueConfig kv = load_kv(args);
  RunConfig cfg = resolve_config(kv);
  fs::path dir(args.out_dir);
  write_resolved(cfg, dir);
  std::unique_ptr<Environment> env = cfg.make_environment();
  std::vector<DemonstrationSet> demos = build_demos(cfg, *env);
  if (demos.empty()) throw ConfigError("demo.m must be >= 1 for gen-demo");
  for (std::size_t j = 0; j < demos.size(); ++j) {
    std::string name = demos.size() == 1 ? "demo.csv"
                                         : "demo" + std::to_string(j) + ".csv";
    save_demo_csv(demos[j], (dir / name).string());
  }
  std::cout << "demo pairs=" << demos.front().size()
            << " source_quality=" << format_double(demos.front().source_quality)
            << "\n";
  return 0;
}

int run_and_write(const CommonArgs& args, Method method) {
  KeyValueConfig kv = load_kv(args);
  RunConfig cfg = resolve_config(kv);
  fs::path dir(args.out_dir);
  std::unique_ptr<Environment> env = cfg.make_environment();

  const bool wants_demos = method != Method::trpo && cfg.demo_m > 0;
  std::vector<DemonstrationSet> demos;
  if (wants_demos) {
    demos = build_demos(cfg, *env);
    for (std::size_t j = 0; j < demos.size(); ++j) {
      std::string name = demos.size() == 1
                             ? "demo.csv"
                             : "demo" + std::to_string(j) + ".csv";
      fs::create_directories(dir);
      save_demo_csv(demos[j], (dir / name).string());
    }
  }
  TrainingLog log =
      run_training(cfg, method, wants_demos ? &demos : nullptr);
  write_run_outputs(cfg, kv, log, dir);
  std::cout << log.method << " epochs=" << log.records.size()
            << " final_eval="
            << format_double(log.records.empty()
                                 ? 0.0
                                 : log.records.back().eval_reward)
            << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  KeyValueConfig kv = load_kv(args);
  RunConfig cfg = resolve_config(kv);
  fs::path dir(args.out_dir);
  write_resolved(cfg, dir);
  std::string axis = kv.get_string("sweep.axis", "quality");
  std::vector<double> values = kv.get_doubles("sweep.values", {});
  std::vector<Method> methods;
  for (const std::string& name :
       split(kv.get_string("sweep.methods", "learn_sam,trpo"), ','))
    methods.push_back(method_from_name(trim(name)));
  int seeds = static_cast<int>(kv.get_int("sweep.seeds", 10));
  SweepResult result = sweep(cfg, axis, values, methods, seeds);
  write_sweep_csv(result, (dir / "sweep.csv").string());
  write_metrics_csv(result.reports, (dir / "metrics.csv").string());
  std::cout << "sweep cells=" << result.cells.size() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args, const std::string& policy_path) {
  KeyValueConfig kv = load_kv(args);
  RunConfig cfg = resolve_config(kv);
  fs::path dir(args.out_dir);
  write_resolved(cfg, dir);
  std::unique_ptr<Environment> env = cfg.make_environment();
  std::unique_ptr<DifferentiablePolicy> policy = load_policy_json(policy_path);
  Rng rng_eval = Rng::stream(cfg.seed, "eval");
  double reward = evaluate_deterministic(
      *env, [&](const Vec& s) { return policy->mode(s); }, cfg.eval_episodes,
      rng_eval);
  SweepCell cell;
  cell.method = "eval";
  cell.final_reward = reward;
  double threshold = kv.get_double("metric.threshold",
                                   std::numeric_limits<double>::quiet_NaN());
  cell.iters_to_demo = (!std::isnan(threshold) && reward >= threshold) ? 1 : -1;
  write_metrics_csv({summarize_cells({cell})}, (dir / "metrics.csv").string());
  std::cout << "eval_reward=" << format_double(reward) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"localized-ensemble RL from demonstration"};
  app.require_subcommand(1);

  CommonArgs train_expert_args, gen_demo_args, learn_args, baseline_args,
      sweep_args, eval_args;
  std::string baseline_kind, eval_policy;

  add_common(app.add_subcommand("train-expert",
                                "train or construct the reference expert"),
             &train_expert_args);
  add_common(app.add_subcommand("gen-demo", "sample a demonstration set"),
             &gen_demo_args);
  add_common(app.add_subcommand("learn", "run the localized-ensemble learner"),
             &learn_args);
  CLI::App* baseline =
      app.add_subcommand("baseline", "run a baseline learner");
  add_common(baseline, &baseline_args);
  baseline->add_option("--kind", baseline_kind,
                       "trpo | pretrain | naive_ensemble");
  add_common(app.add_subcommand("sweep", "demo quality/sparsity sweep"),
             &sweep_args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a saved policy");
  add_common(eval_cmd, &eval_args);
  eval_cmd->add_option("--policy", eval_policy, "policy json file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand("train-expert")) return cmd_train_expert(train_expert_args);
    if (app.got_subcommand("gen-demo")) return cmd_gen_demo(gen_demo_args);
    if (app.got_subcommand("learn")) return run_and_write(learn_args, Method::learn_sam);
    if (app.got_subcommand("baseline")) {
      KeyValueConfig kv = load_kv(baseline_args);
      std::string kind = baseline_kind.empty()
                             ? kv.get_string("baseline.kind", "trpo")
                             : baseline_kind;
      return run_and_write(baseline_args, method_from_name(kind));
    }
    if (app.got_subcommand("sweep")) return cmd_sweep(sweep_args);
    if (app.got_subcommand("eval")) return cmd_eval(eval_args, eval_policy);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
