#pragma once

#include <nlohmann/json.hpp>
#include <span>
#include <vector>

#include "mecheval/patching/profile.hpp"
#include "mecheval/rules/verifier.hpp"

namespace mecheval {

struct ThresholdGrid {
  std::vector<double> tau_gap{0.25, 0.3, 0.4};
  std::vector<double> alpha{0.80, 0.90, 0.95};
  std::vector<double> top_layer_fraction{0.80, 0.90, 0.95};

  std::vector<RuleThresholds> cells() const {
    std::vector<RuleThresholds> out;
    for (double t : tau_gap)
      for (double a : alpha)
        for (double f : top_layer_fraction) out.push_back({t, a, f});
    return out;
  }
};

struct SweepCell {
  RuleThresholds thresholds;
  double r1_rate = 0.0;
  double r2_rate = 0.0;
  double pass_rate = 0.0;  // R3
  bool operator==(const SweepCell&) const = default;
};

// Re-applies the rules under every grid setting. Touches only the profiles,
// never a model.
inline std::vector<SweepCell> threshold_sweep(std::span<const PatchProfile> profiles, const ThresholdGrid& grid) {
  std::vector<SweepCell> out;
  for (const auto& t : grid.cells()) {
    const Verdicts v = verify(profiles, t);
    const AggregateVerdict a = aggregate(v, profiles);
    const double n = static_cast<double>(a.n_examples);
    out.push_back({t, static_cast<double>(a.n_r1) / n, static_cast<double>(a.n_r2) / n, a.pass_rate_overall});
  }
  return out;
}

inline void to_json(nlohmann::json& j, const ThresholdGrid& g) {
  j = nlohmann::json{{"tau_gap", g.tau_gap}, {"alpha", g.alpha}, {"top_layer_fraction", g.top_layer_fraction}};
}

inline void from_json(const nlohmann::json& j, ThresholdGrid& g) {
  ThresholdGrid d;
  g.tau_gap = j.value("tau_gap", d.tau_gap);
  g.alpha = j.value("alpha", d.alpha);
  g.top_layer_fraction = j.value("top_layer_fraction", d.top_layer_fraction);
}

inline void to_json(nlohmann::json& j, const SweepCell& c) {
  j = nlohmann::json{{"thresholds", c.thresholds}, {"r1_rate", c.r1_rate}, {"r2_rate", c.r2_rate},
                     {"pass_rate", c.pass_rate}};
}

inline void from_json(const nlohmann::json& j, SweepCell& c) {
  c.thresholds = j.at("thresholds").get<RuleThresholds>();
  c.r1_rate = j.at("r1_rate").get<double>();
  c.r2_rate = j.at("r2_rate").get<double>();
  c.pass_rate = j.at("pass_rate").get<double>();
}

}  // namespace mecheval
