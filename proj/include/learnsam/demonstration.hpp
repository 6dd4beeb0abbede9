#ifndef LEARNSAM_DEMONSTRATION_HPP_
#define LEARNSAM_DEMONSTRATION_HPP_

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "learnsam/mdp.hpp"

namespace learnsam {

/// Recorded expert state-action pairs plus provenance metadata.
struct DemonstrationSet {
  std::vector<std::pair<StateVector, ActionValue>> pairs;
  double source_quality = 0.0;  // mean aggregated reward of the generating episodes
  double noise_sd = 0.0;
  std::string env_id;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  std::vector<Vec> states() const {
    std::vector<Vec> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(p.first);
    return out;
  }
};

/// CSV layout: one self-describing header row with the metadata, then one
/// row per pair (state components, then action components). Doubles are
/// written in shortest round-trip form, so save/load is exact.
inline void save_demo_csv(const DemonstrationSet& demo,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "env_id=" << demo.env_id << ",noise_sd=" << format_double(demo.noise_sd)
      << ",source_quality=" << format_double(demo.source_quality) << "\n";
  for (const auto& [s, a] : demo.pairs) {
    for (int i = 0; i < s.size(); ++i) out << format_double(s[i]) << ",";
    if (a.is_discrete()) {
      out << a.index;
    } else {
      for (int i = 0; i < a.vector.size(); ++i) {
        if (i) out << ",";
        out << format_double(a.vector[i]);
      }
    }
    out << "\n";
  }
}

inline DemonstrationSet load_demo_csv(const std::string& path, int state_dim,
                                      ActionKind action_kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  DemonstrationSet demo;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty demo file");
  for (const std::string& field : split(trim(line), ',')) {
    auto kv = split(field, '=');
    if (kv.size() != 2) throw std::runtime_error("bad demo header: " + line);
    if (kv[0] == "env_id") demo.env_id = kv[1];
    else if (kv[0] == "noise_sd") demo.noise_sd = std::strtod(kv[1].c_str(), nullptr);
    else if (kv[0] == "source_quality")
      demo.source_quality = std::strtod(kv[1].c_str(), nullptr);
  }
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    auto fields = split(line, ',');
    if (static_cast<int>(fields.size()) <= state_dim)
      throw std::runtime_error("bad demo row: " + line);
    Vec s(state_dim);
    for (int i = 0; i < state_dim; ++i)
      s[i] = std::strtod(fields[i].c_str(), nullptr);
    ActionValue a;
    if (action_kind == ActionKind::discrete) {
      a = ActionValue::of_index(std::atoi(fields[state_dim].c_str()));
    } else {
      Vec v(fields.size() - state_dim);
      for (std::size_t i = state_dim; i < fields.size(); ++i)
        v[i - state_dim] = std::strtod(fields[i].c_str(), nullptr);
      a = ActionValue::of_vector(std::move(v));
    }
    demo.pairs.emplace_back(std::move(s), std::move(a));
  }
  return demo;
}

}  // namespace learnsam

#endif  // LEARNSAM_DEMONSTRATION_HPP_
