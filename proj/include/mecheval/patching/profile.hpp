#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mecheval/corruption/pools.hpp"

namespace mecheval {

inline constexpr double kDefaultTopLayerFraction = 0.9;

// Per-example causal record of one patching sweep.
struct PatchProfile {
  std::string id;
  std::string model;
  CorruptionCategory category = CorruptionCategory::kDBSynonyms;
  double clean_diff = 0.0;
  double corr_diff = 0.0;
  double gap = 0.0;
  std::vector<double> shift_by_layer;
  double best_recovery = 0.0;
  std::size_t best_layer = 0;
  double rec_frac = 0.0;
  double top_layer_fraction = kDefaultTopLayerFraction;
  std::vector<std::size_t> top_layers;

  bool operator==(const PatchProfile&) const = default;
};

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// Recovery toward the clean preference achieved by patching one layer.
inline double signed_recovery(double gap, double shift) { return std::max(0.0, sign_of(gap) * shift); }

// Layers recovering at least `fraction` of |gap|; empty when gap is 0.
inline std::vector<std::size_t> top_layers_at(double gap, const std::vector<double>& shifts, double fraction) {
  std::vector<std::size_t> out;
  if (gap == 0.0) return out;
  const double need = fraction * std::abs(gap);
  for (std::size_t l = 0; l < shifts.size(); ++l)
    if (signed_recovery(gap, shifts[l]) >= need) out.push_back(l);
  return out;
}

inline PatchProfile build_profile(double clean_diff, double corr_diff, std::vector<double> shift_by_layer,
                                  double top_layer_fraction = kDefaultTopLayerFraction) {
  PatchProfile p;
  p.clean_diff = clean_diff;
  p.corr_diff = corr_diff;
  p.gap = clean_diff - corr_diff;
  p.shift_by_layer = std::move(shift_by_layer);
  for (std::size_t l = 0; l < p.shift_by_layer.size(); ++l) {
    const double r = signed_recovery(p.gap, p.shift_by_layer[l]);
    if (r > p.best_recovery) {
      p.best_recovery = r;
      p.best_layer = l;
    }
  }
  const double magnitude = std::abs(p.gap);
  p.rec_frac = magnitude > 0.0 ? std::min(p.best_recovery, magnitude) / magnitude : 0.0;
  p.top_layer_fraction = top_layer_fraction;
  p.top_layers = top_layers_at(p.gap, p.shift_by_layer, top_layer_fraction);
  return p;
}

inline void to_json(nlohmann::json& j, const PatchProfile& p) {
  j = nlohmann::json{{"id", p.id},
                     {"model", p.model},
                     {"category", std::string(to_string(p.category))},
                     {"clean_diff", p.clean_diff},
                     {"corr_diff", p.corr_diff},
                     {"gap", p.gap},
                     {"shift_by_layer", p.shift_by_layer},
                     {"best_recovery", p.best_recovery},
                     {"best_layer", p.best_layer},
                     {"rec_frac", p.rec_frac},
                     {"top_layer_fraction", p.top_layer_fraction},
                     {"top_layers", p.top_layers}};
}

inline void from_json(const nlohmann::json& j, PatchProfile& p) {
  p.id = j.at("id").get<std::string>();
  p.model = j.value("model", std::string());
  p.category = parse_category(j.at("category").get<std::string>());
  p.clean_diff = j.at("clean_diff").get<double>();
  p.corr_diff = j.at("corr_diff").get<double>();
  p.gap = j.at("gap").get<double>();
  p.shift_by_layer = j.at("shift_by_layer").get<std::vector<double>>();
  p.best_recovery = j.at("best_recovery").get<double>();
  p.best_layer = j.at("best_layer").get<std::size_t>();
  p.rec_frac = j.at("rec_frac").get<double>();
  p.top_layer_fraction = j.value("top_layer_fraction", kDefaultTopLayerFraction);
  p.top_layers = j.at("top_layers").get<std::vector<std::size_t>>();
}

}  // namespace mecheval
