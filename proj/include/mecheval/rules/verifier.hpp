#pragma once

#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/patching/profile.hpp"

namespace mecheval {

struct RuleThresholds {
  double tau_gap = 0.4;
  double alpha = 0.9;
  double top_layer_fraction = 0.9;

  void validate() const {
    require(tau_gap >= 0.0, ErrorKind::kConfig, "tau_gap must be >= 0");
    require(alpha > 0.0 && alpha <= 1.0, ErrorKind::kConfig, "alpha must lie in (0, 1]");
    require(top_layer_fraction > 0.0 && top_layer_fraction <= 1.0, ErrorKind::kConfig,
            "top_layer_fraction must lie in (0, 1]");
  }

  bool operator==(const RuleThresholds&) const = default;
};

struct RuleOutcome {
  std::string id;
  std::string model;
  CorruptionCategory category = CorruptionCategory::kDBSynonyms;
  bool r1 = false;
  bool r2 = false;
  bool r3 = false;

  bool operator==(const RuleOutcome&) const = default;
};

// R1: the gap reaches tau_gap (a zero gap never passes).
// R2: R1 and the capped recovery fraction reaches alpha.
inline std::pair<bool, bool> evaluate_r1_r2(const PatchProfile& profile, const RuleThresholds& t) {
  const bool r1 = profile.gap != 0.0 && std::abs(profile.gap) >= t.tau_gap;
  const bool r2 = r1 && profile.rec_frac >= t.alpha;
  return {r1, r2};
}

// Mode of best_layer over examples passing R1 and R2; ties go to the lowest
// layer. nullopt when no example qualifies.
inline std::optional<std::size_t> modal_layer(std::span<const PatchProfile> profiles,
                                              std::span<const std::pair<bool, bool>> r1_r2) {
  require(profiles.size() == r1_r2.size(), ErrorKind::kPipeline, "profiles and outcomes are not aligned");
  std::map<std::size_t, std::size_t> counts;
  for (std::size_t i = 0; i < profiles.size(); ++i)
    if (r1_r2[i].first && r1_r2[i].second) ++counts[profiles[i].best_layer];
  std::optional<std::size_t> best;
  std::size_t best_count = 0;
  for (const auto& [layer, count] : counts)
    if (count > best_count) {
      best = layer;
      best_count = count;
    }
  return best;
}

inline bool evaluate_r3(const PatchProfile& profile, bool r1, bool r2, std::optional<std::size_t> modal,
                        double top_layer_fraction = kDefaultTopLayerFraction) {
  if (!(r1 && r2) || !modal) return false;
  for (std::size_t l : top_layers_at(profile.gap, profile.shift_by_layer, top_layer_fraction))
    if (l == *modal) return true;
  return false;
}

struct Verdicts {
  std::vector<RuleOutcome> outcomes;
  std::optional<std::size_t> modal_layer;
};

// Applies R1-R3 to one model's profiles. Pure function of its inputs.
inline Verdicts verify(std::span<const PatchProfile> profiles, const RuleThresholds& t) {
  t.validate();
  std::vector<std::pair<bool, bool>> r1_r2;
  r1_r2.reserve(profiles.size());
  for (const auto& p : profiles) r1_r2.push_back(evaluate_r1_r2(p, t));
  Verdicts v;
  v.modal_layer = modal_layer(profiles, r1_r2);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto [r1, r2] = r1_r2[i];
    v.outcomes.push_back(RuleOutcome{profiles[i].id, profiles[i].model, profiles[i].category, r1, r2,
                                     evaluate_r3(profiles[i], r1, r2, v.modal_layer, t.top_layer_fraction)});
  }
  return v;
}

struct AggregateVerdict {
  std::optional<std::size_t> modal_layer;
  double pass_rate_overall = 0.0;
  std::map<CorruptionCategory, double> pass_rate_by_category;
  // Share of R1/R2-qualifying examples whose top layers contain the modal layer.
  double modal_layer_usage = 0.0;
  // best_layer histogram over R3-passing examples.
  std::map<std::size_t, std::size_t> r3_best_layers;
  std::size_t n_examples = 0;
  std::size_t n_r1 = 0, n_r2 = 0, n_r3 = 0;

  bool operator==(const AggregateVerdict&) const = default;
};

inline AggregateVerdict aggregate(const Verdicts& verdicts, std::span<const PatchProfile> profiles) {
  const auto& outcomes = verdicts.outcomes;
  require(!outcomes.empty(), ErrorKind::kPipeline, "cannot aggregate an empty outcome set");
  require(profiles.size() == outcomes.size(), ErrorKind::kPipeline, "profiles and outcomes are not aligned");
  AggregateVerdict a;
  a.modal_layer = verdicts.modal_layer;
  a.n_examples = outcomes.size();
  std::map<CorruptionCategory, std::pair<std::size_t, std::size_t>> per_category;  // (passed, total)
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    a.n_r1 += o.r1;
    a.n_r2 += o.r2;
    a.n_r3 += o.r3;
    auto& [passed, total] = per_category[o.category];
    passed += o.r3;
    ++total;
    if (o.r3) ++a.r3_best_layers[profiles[i].best_layer];
  }
  a.pass_rate_overall = static_cast<double>(a.n_r3) / static_cast<double>(a.n_examples);
  for (const auto& [category, counts] : per_category)
    a.pass_rate_by_category[category] = static_cast<double>(counts.first) / static_cast<double>(counts.second);
  a.modal_layer_usage = a.n_r2 == 0 ? 0.0 : static_cast<double>(a.n_r3) / static_cast<double>(a.n_r2);
  return a;
}

inline void to_json(nlohmann::json& j, const RuleThresholds& t) {
  j = nlohmann::json{{"tau_gap", t.tau_gap}, {"alpha", t.alpha}, {"top_layer_fraction", t.top_layer_fraction}};
}

inline void from_json(const nlohmann::json& j, RuleThresholds& t) {
  RuleThresholds d;
  t.tau_gap = j.value("tau_gap", d.tau_gap);
  t.alpha = j.value("alpha", d.alpha);
  t.top_layer_fraction = j.value("top_layer_fraction", d.top_layer_fraction);
}

inline void to_json(nlohmann::json& j, const RuleOutcome& o) {
  j = nlohmann::json{{"id", o.id},       {"model", o.model}, {"category", std::string(to_string(o.category))},
                     {"r1", o.r1},       {"r2", o.r2},       {"r3", o.r3}};
}

inline void from_json(const nlohmann::json& j, RuleOutcome& o) {
  o.id = j.at("id").get<std::string>();
  o.model = j.value("model", std::string());
  o.category = parse_category(j.at("category").get<std::string>());
  o.r1 = j.at("r1").get<bool>();
  o.r2 = j.at("r2").get<bool>();
  o.r3 = j.at("r3").get<bool>();
}

inline void to_json(nlohmann::json& j, const AggregateVerdict& a) {
  nlohmann::json by_cat = nlohmann::json::object();
  for (const auto& [c, r] : a.pass_rate_by_category) by_cat[std::string(to_string(c))] = r;
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [l, n] : a.r3_best_layers) hist[std::to_string(l)] = n;
  j = nlohmann::json{{"modal_layer", a.modal_layer ? nlohmann::json(*a.modal_layer) : nlohmann::json(nullptr)},
                     {"pass_rate_overall", a.pass_rate_overall},
                     {"pass_rate_by_category", by_cat},
                     {"modal_layer_usage", a.modal_layer_usage},
                     {"r3_best_layers", hist},
                     {"n_examples", a.n_examples},
                     {"n_r1", a.n_r1},
                     {"n_r2", a.n_r2},
                     {"n_r3", a.n_r3}};
}

inline void from_json(const nlohmann::json& j, AggregateVerdict& a) {
  a.modal_layer = j.at("modal_layer").is_null() ? std::nullopt
                                                 : std::optional<std::size_t>(j.at("modal_layer").get<std::size_t>());
  a.pass_rate_overall = j.at("pass_rate_overall").get<double>();
  a.pass_rate_by_category.clear();
  for (const auto& [k, v] : j.at("pass_rate_by_category").items()) a.pass_rate_by_category[parse_category(k)] = v.get<double>();
  a.modal_layer_usage = j.at("modal_layer_usage").get<double>();
  a.r3_best_layers.clear();
  for (const auto& [k, v] : j.at("r3_best_layers").items()) a.r3_best_layers[std::stoull(k)] = v.get<std::size_t>();
  a.n_examples = j.at("n_examples").get<std::size_t>();
  a.n_r1 = j.at("n_r1").get<std::size_t>();
  a.n_r2 = j.at("n_r2").get<std::size_t>();
  a.n_r3 = j.at("n_r3").get<std::size_t>();
}

}  // namespace mecheval
