#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mecheval/oracle/random_model.hpp"
#include "mecheval/oracle/reference.hpp"
#include "mecheval/patching/engine.hpp"
#include "mecheval/rules/verifier.hpp"

namespace mecheval::oracle {

struct Disagreement {
  std::string id;
  std::string field;
};

struct DifferentialReport {
  std::size_t n_examples = 0;
  std::size_t n_models = 0;
  double max_abs_error = 0.0;  // over diffs, gaps and shifts
  // Decisions whose reference value lies within float32 rounding of a
  // threshold or tie; excluded from the comparison.
  std::size_t n_ambiguous = 0;
  std::size_t n_decisions = 0;
  std::vector<Disagreement> disagreements;

  bool clean() const { return disagreements.empty(); }
  DifferentialReport& operator+=(const DifferentialReport& o) {
    n_examples += o.n_examples;
    n_models += o.n_models;
    max_abs_error = std::max(max_abs_error, o.max_abs_error);
    n_ambiguous += o.n_ambiguous;
    n_decisions += o.n_decisions;
    disagreements.insert(disagreements.end(), o.disagreements.begin(), o.disagreements.end());
    return *this;
  }
};

// Real fields agree within bounds derived from `tol`, the relative logit
// accuracy of the float32 engine: tol * max(1, logit_scale) per logit.
// Discrete fields must match exactly unless the reference decision is within
// that bound of its threshold or tie.
inline DifferentialReport compare_with_oracle(std::span<const PatchProfile> profiles, const Verdicts& verdicts,
                                              const OracleResult& oracle, double tol = 1e-4) {
  require(profiles.size() == oracle.profiles.size() && verdicts.outcomes.size() == oracle.verdicts.size() &&
              profiles.size() == verdicts.outcomes.size(),
          ErrorKind::kPipeline, "engine and oracle cover different example counts");
  const auto& t = oracle.thresholds;
  DifferentialReport r;
  r.n_examples = profiles.size();
  r.n_models = 1;
  auto real = [&](const std::string& id, const char* field, double engine, double ref, double bound) {
    const double err = std::fabs(engine - ref);
    r.max_abs_error = std::max(r.max_abs_error, err);
    if (!(err <= bound)) r.disagreements.push_back({id, field});
  };
  auto decide = [&](bool sure, bool engine, bool ref, const std::string& id, const char* field) {
    ++r.n_decisions;
    if (!sure) {
      ++r.n_ambiguous;
    } else if (engine != ref) {
      r.disagreements.push_back({id, field});
    }
  };

  const std::size_t n = profiles.size();
  std::vector<bool> qualifies_sure(n);
  std::vector<std::vector<std::size_t>> best_candidates(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = profiles[i];
    const auto& o = oracle.profiles[i];
    const double e_diff = 2.0 * tol * std::max(1.0, o.logit_scale);
    const double e_gap = 2.0 * e_diff;
    const double mag = std::fabs(o.gap);
    real(p.id, "clean_diff", p.clean_diff, o.clean_diff, e_diff);
    real(p.id, "corr_diff", p.corr_diff, o.corr_diff, e_diff);
    real(p.id, "gap", p.gap, o.gap, e_gap);
    real(p.id, "best_recovery", p.best_recovery, o.best_recovery, e_gap);
    if (p.shift_by_layer.size() != o.shifts.size()) {
      r.disagreements.push_back({p.id, "shift_by_layer.size"});
      continue;
    }
    for (std::size_t l = 0; l < o.shifts.size(); ++l)
      real(p.id, "shift_by_layer", p.shift_by_layer[l], o.shifts[l], e_gap);

    const bool gap_sure = mag > 2.0 * e_gap;
    const double e_frac = gap_sure ? 2.0 * e_gap / (mag - e_gap) : 1.0;
    ++r.n_decisions;
    if (gap_sure) {
      real(p.id, "rec_frac", p.rec_frac, o.rec_frac, e_frac);
    } else {
      ++r.n_ambiguous;
    }

    std::vector<double> rec(o.shifts.size());
    for (std::size_t l = 0; l < rec.size(); ++l) rec[l] = signed_recovery(o.gap, o.shifts[l]);
    // Layers whose recovery ties the best within rounding; the engine may
    // resolve such a tie either way.
    const bool best_sure = gap_sure && o.best_recovery > 2.0 * e_gap;
    if (best_sure)
      for (std::size_t l = 0; l < rec.size(); ++l)
        if (o.best_recovery - rec[l] <= 2.0 * e_gap) best_candidates[i].push_back(l);
    ++r.n_decisions;
    if (best_sure) {
      const auto& cand = best_candidates[i];
      if (std::find(cand.begin(), cand.end(), p.best_layer) == cand.end())
        r.disagreements.push_back({p.id, "best_layer"});
    } else {
      ++r.n_ambiguous;
    }

    for (std::size_t l = 0; l < rec.size(); ++l) {
      const bool engine_in = std::find(p.top_layers.begin(), p.top_layers.end(), l) != p.top_layers.end();
      const bool ref_in = std::find(o.top_layers.begin(), o.top_layers.end(), l) != o.top_layers.end();
      const bool sure = gap_sure && std::fabs(rec[l] - t.top_layer_fraction * mag) > 2.0 * e_gap;
      decide(sure, engine_in, ref_in, p.id, "top_layers");
    }

    const auto& v = verdicts.outcomes[i];
    const auto& ov = oracle.verdicts[i];
    const bool r1_sure = gap_sure && std::fabs(mag - t.tau_gap) > e_gap;
    decide(r1_sure, v.r1, ov.r1, p.id, "r1");
    const bool r2_sure = r1_sure && (!ov.r1 || std::fabs(o.rec_frac - t.alpha) > e_frac);
    decide(r2_sure, v.r2, ov.r2, p.id, "r2");
    qualifies_sure[i] = r2_sure && (!ov.r2 || !best_candidates[i].empty());
  }

  // Reference modal layer: exact when every vote is settled and unique;
  // otherwise the engine's choice must be a layer the votes can produce, and
  // R3 is re-derived from the reference recoveries at that layer.
  std::map<std::size_t, std::size_t> votes;
  std::set<std::size_t> plausible;
  bool exact = true;
  for (std::size_t i = 0; i < n; ++i) {
    if (!qualifies_sure[i]) {
      exact = false;
      for (std::size_t l = 0; l < oracle.profiles[i].shifts.size(); ++l) plausible.insert(l);
    } else if (oracle.verdicts[i].r2) {
      const auto& cand = best_candidates[i];
      exact = exact && cand.size() == 1;
      ++votes[cand.front()];
      plausible.insert(cand.begin(), cand.end());
    }
  }
  ++r.n_decisions;
  std::optional<std::size_t> modal;
  if (exact) {
    std::size_t top = 0;
    for (const auto& [layer, count] : votes)
      if (count > top) {
        top = count;
        modal = layer;
      }
    if (verdicts.modal_layer != modal) r.disagreements.push_back({"*", "modal_layer"});
  } else if (verdicts.modal_layer ? !plausible.count(*verdicts.modal_layer) : !votes.empty()) {
    r.disagreements.push_back({"*", "modal_layer"});
  }
  modal = verdicts.modal_layer;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = oracle.profiles[i];
    const bool r2 = oracle.verdicts[i].r2;
    bool sure = qualifies_sure[i];
    bool ref = false;
    if (sure && r2 && modal && *modal < o.shifts.size()) {
      const double e_gap = 4.0 * tol * std::max(1.0, o.logit_scale);
      const double rec = signed_recovery(o.gap, o.shifts[*modal]);
      const double need = t.top_layer_fraction * std::fabs(o.gap);
      sure = std::fabs(rec - need) > 2.0 * e_gap;
      ref = rec >= need;
    }
    decide(sure, verdicts.outcomes[i].r3, ref, profiles[i].id, "r3");
  }
  return r;
}

// Engine pipeline and brute-force oracle on one model and pair set.
inline DifferentialReport differential_check(const TensorArchive& archive, const ModelConfig& config,
                                             std::span<const PromptPair> pairs, const RuleThresholds& t,
                                             PatchSpanMode mode = PatchSpanMode::kFullSpan, std::size_t workers = 1) {
  const Model model = Model::load(archive, config);
  ProfileOptions opt;
  opt.span_mode = mode;
  opt.top_layer_fraction = t.top_layer_fraction;
  opt.workers = workers;
  const auto profiles = profile_pairs(model, pairs, opt);
  const Verdicts verdicts = verify(profiles, t);
  const OracleResult oracle =
      brute_force_pipeline(archive, config, std::vector<PromptPair>(pairs.begin(), pairs.end()),
                           {t.tau_gap, t.alpha, t.top_layer_fraction}, mode == PatchSpanMode::kFirstToken);
  return compare_with_oracle(profiles, verdicts, oracle);
}

// n_models random tiny models with pairs_per_model random pairs each.
inline DifferentialReport random_differential_check(std::size_t n_models, std::size_t pairs_per_model,
                                                    std::uint64_t seed, const RuleThresholds& t,
                                                    std::size_t workers = 1) {
  DifferentialReport total;
  for (std::size_t i = 0; i < n_models; ++i) {
    const RandomModel rm = random_tiny_model(seed + i);
    const auto pairs = random_pairs(rm.config, pairs_per_model, seed + i);
    DifferentialReport r = differential_check(rm.archive, rm.config, pairs, t, PatchSpanMode::kFullSpan, workers);
    for (auto& d : r.disagreements) d.id = "model-" + std::to_string(seed + i) + "/" + d.id;
    total += r;
  }
  return total;
}

}  // namespace mecheval::oracle
