#ifndef LEARNSAM_SERIALIZE_HPP_
#define LEARNSAM_SERIALIZE_HPP_

#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "learnsam/policy.hpp"

namespace learnsam {

/// MLP policy save/load. Doubles survive the JSON round-trip exactly, so a
/// reloaded policy reproduces the original bit for bit.
inline nlohmann::json policy_to_json(const DifferentiablePolicy& policy) {
  nlohmann::json j;
  j["version"] = 1;
  const Mlp* mlp = nullptr;
  const StateScaler* scaler = nullptr;
  if (auto* cat = dynamic_cast<const CategoricalMlpPolicy*>(&policy)) {
    j["kind"] = "categorical_mlp";
    mlp = &cat->mlp();
    scaler = &cat->scaler();
  } else if (auto* gauss = dynamic_cast<const GaussianMlpPolicy*>(&policy)) {
    j["kind"] = "gaussian_mlp";
    mlp = &gauss->mlp();
    scaler = &gauss->scaler();
  } else {
    throw std::logic_error("unsupported policy type for serialization");
  }
  const auto& dims = mlp->dims();
  j["state_dim"] = dims.front();
  j["actions"] = dims.back();
  j["hidden"] = std::vector<int>(dims.begin() + 1, dims.end() - 1);
  j["scaler_shift"] = std::vector<double>(
      scaler->shift.data(), scaler->shift.data() + scaler->shift.size());
  j["scaler_scale"] = std::vector<double>(
      scaler->scale.data(), scaler->scale.data() + scaler->scale.size());
  Vec params = policy.trainable_params();
  j["params"] =
      std::vector<double>(params.data(), params.data() + params.size());
  return j;
}

inline std::unique_ptr<DifferentiablePolicy> policy_from_json(
    const nlohmann::json& j) {
  const int state_dim = j.at("state_dim").get<int>();
  const int actions = j.at("actions").get<int>();
  std::vector<int> hidden = j.at("hidden").get<std::vector<int>>();
  std::vector<double> shift = j.at("scaler_shift").get<std::vector<double>>();
  std::vector<double> scale = j.at("scaler_scale").get<std::vector<double>>();
  StateScaler scaler;
  scaler.shift = Eigen::Map<const Vec>(shift.data(), shift.size());
  scaler.scale = Eigen::Map<const Vec>(scale.data(), scale.size());
  Rng scratch(0);  // init is overwritten by the stored parameters
  std::unique_ptr<DifferentiablePolicy> policy;
  if (j.at("kind") == "categorical_mlp")
    policy = std::make_unique<CategoricalMlpPolicy>(state_dim, hidden, actions,
                                                    scaler, scratch);
  else if (j.at("kind") == "gaussian_mlp")
    policy = std::make_unique<GaussianMlpPolicy>(state_dim, hidden, actions,
                                                 scaler, scratch);
  else
    throw std::runtime_error("unknown policy kind in file");
  std::vector<double> params = j.at("params").get<std::vector<double>>();
  policy->set_trainable_params(
      Eigen::Map<const Vec>(params.data(), params.size()));
  return policy;
}

inline void save_policy_json(const DifferentiablePolicy& policy,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << policy_to_json(policy).dump(2) << "\n";
}

inline std::unique_ptr<DifferentiablePolicy> load_policy_json(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return policy_from_json(j);
}

}  // namespace learnsam

#endif  // LEARNSAM_SERIALIZE_HPP_
