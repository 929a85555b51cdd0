#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mecheval/baseline/evaluate.hpp"
#include "mecheval/core/error.hpp"
#include "mecheval/core/parallel.hpp"
#include "mecheval/patching/profile.hpp"
#include "mecheval/rules/bootstrap.hpp"
#include "mecheval/rules/sweep.hpp"
#include "mecheval/rules/verifier.hpp"

namespace mecheval {

struct ModelReport {
  std::string name;
  bool train_schema = false;
  AggregateVerdict aggregate;
  ConfidenceInterval mean_gap;
  std::map<CorruptionCategory, double> mean_gap_by_category;
  std::vector<SweepCell> sweep;

  bool operator==(const ModelReport&) const = default;
};

// Schema-trained model minus the model trained without schema.
struct ModelComparison {
  std::string schema_model;
  std::string baseline_model;
  std::map<CorruptionCategory, double> effect_by_category;
  ConfidenceInterval training_effect;

  bool operator==(const ModelComparison&) const = default;
};

struct EvalReport {
  RuleThresholds thresholds;
  BootstrapSettings bootstrap;
  std::string patch_span = "span";
  std::vector<ModelReport> models;
  std::optional<ModelComparison> comparison;
  std::vector<AccuracyReport> baseline;

  bool operator==(const EvalReport&) const = default;
};

struct ModelProfiles {
  std::string name;
  bool train_schema = false;
  std::vector<PatchProfile> profiles;
};

inline std::vector<double> gaps_of(std::span<const PatchProfile> profiles) {
  std::vector<double> gaps;
  for (const auto& p : profiles) gaps.push_back(p.gap);
  return gaps;
}

inline ModelReport summarize_model(const ModelProfiles& m, const RuleThresholds& thresholds,
                                   const BootstrapSettings& bootstrap, const ThresholdGrid& grid,
                                   std::size_t workers = 1) {
  require(!m.profiles.empty(), ErrorKind::kPipeline, "model '" + m.name + "' has no profiles");
  ModelReport r;
  r.name = m.name;
  r.train_schema = m.train_schema;
  r.aggregate = aggregate(verify(m.profiles, thresholds), m.profiles);
  const auto gaps = gaps_of(m.profiles);
  r.mean_gap = bootstrap_ci(gaps, bootstrap, workers);
  std::map<CorruptionCategory, std::vector<double>> by_category;
  for (const auto& p : m.profiles) by_category[p.category].push_back(p.gap);
  for (const auto& [c, values] : by_category) r.mean_gap_by_category[c] = anchored_mean(values);
  r.sweep = threshold_sweep(m.profiles, grid);
  return r;
}

// Effect point estimates are differences of the reported per-model means;
// the interval comes from bootstrapping gap differences paired by example id.
inline ModelComparison compare_models(const ModelProfiles& schema, const ModelReport& schema_report,
                                      const ModelProfiles& base, const ModelReport& base_report,
                                      const BootstrapSettings& bootstrap, std::size_t workers = 1) {
  ModelComparison c;
  c.schema_model = schema.name;
  c.baseline_model = base.name;
  for (const auto& [cat, mean] : schema_report.mean_gap_by_category)
    if (auto it = base_report.mean_gap_by_category.find(cat); it != base_report.mean_gap_by_category.end())
      c.effect_by_category[cat] = mean - it->second;

  std::map<std::string, double> base_gap;
  for (const auto& p : base.profiles) base_gap[p.id] = p.gap;
  std::vector<double> diffs;
  for (const auto& p : schema.profiles) {
    auto it = base_gap.find(p.id);
    require(it != base_gap.end(), ErrorKind::kPipeline,
            "example '" + p.id + "' is missing from model '" + base.name + "'; comparison needs the same pair set");
    diffs.push_back(p.gap - it->second);
  }
  require(diffs.size() == base.profiles.size(), ErrorKind::kPipeline, "models were profiled on different pair sets");
  const ConfidenceInterval paired = bootstrap_ci(diffs, bootstrap, workers);
  c.training_effect.mean = schema_report.mean_gap.mean - base_report.mean_gap.mean;
  c.training_effect.lo = std::min(paired.lo, c.training_effect.mean);
  c.training_effect.hi = std::max(paired.hi, c.training_effect.mean);
  return c;
}

// Pure function of the profiles: no model is touched.
inline EvalReport build_report(std::span<const ModelProfiles> models, const RuleThresholds& thresholds,
                               const BootstrapSettings& bootstrap, const ThresholdGrid& grid,
                               std::string patch_span, std::vector<AccuracyReport> baseline = {},
                               std::size_t workers = 1) {
  EvalReport report;
  report.thresholds = thresholds;
  report.bootstrap = bootstrap;
  report.patch_span = std::move(patch_span);
  report.baseline = std::move(baseline);
  for (const auto& m : models) report.models.push_back(summarize_model(m, thresholds, bootstrap, grid, workers));

  if (models.size() == 2 && models[0].train_schema != models[1].train_schema) {
    const std::size_t s = models[0].train_schema ? 0 : 1;
    report.comparison = compare_models(models[s], report.models[s], models[1 - s], report.models[1 - s], bootstrap,
                                       workers);
  }
  return report;
}

namespace detail {

template <typename V>
nlohmann::json category_map_json(const std::map<CorruptionCategory, V>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [c, v] : m) j[std::string(to_string(c))] = v;
  return j;
}

template <typename V>
std::map<CorruptionCategory, V> category_map_from(const nlohmann::json& j) {
  std::map<CorruptionCategory, V> m;
  for (const auto& [k, v] : j.items()) m[parse_category(k)] = v.template get<V>();
  return m;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const ModelReport& r) {
  j = nlohmann::json{{"name", r.name},
                     {"train_schema", r.train_schema},
                     {"aggregate", r.aggregate},
                     {"mean_gap", r.mean_gap},
                     {"mean_gap_by_category", detail::category_map_json(r.mean_gap_by_category)},
                     {"threshold_sweep", r.sweep}};
}

inline void from_json(const nlohmann::json& j, ModelReport& r) {
  r.name = j.at("name").get<std::string>();
  r.train_schema = j.at("train_schema").get<bool>();
  r.aggregate = j.at("aggregate").get<AggregateVerdict>();
  r.mean_gap = j.at("mean_gap").get<ConfidenceInterval>();
  r.mean_gap_by_category = detail::category_map_from<double>(j.at("mean_gap_by_category"));
  r.sweep = j.at("threshold_sweep").get<std::vector<SweepCell>>();
}

inline void to_json(nlohmann::json& j, const ModelComparison& c) {
  j = nlohmann::json{{"schema_model", c.schema_model},
                     {"baseline_model", c.baseline_model},
                     {"effect_by_category", detail::category_map_json(c.effect_by_category)},
                     {"training_effect", c.training_effect}};
}

inline void from_json(const nlohmann::json& j, ModelComparison& c) {
  c.schema_model = j.at("schema_model").get<std::string>();
  c.baseline_model = j.at("baseline_model").get<std::string>();
  c.effect_by_category = detail::category_map_from<double>(j.at("effect_by_category"));
  c.training_effect = j.at("training_effect").get<ConfidenceInterval>();
}

inline void to_json(nlohmann::json& j, const EvalReport& r) {
  j = nlohmann::json{{"thresholds", r.thresholds},
                     {"bootstrap", r.bootstrap},
                     {"patch_span", r.patch_span},
                     {"models", r.models},
                     {"comparison", r.comparison ? nlohmann::json(*r.comparison) : nlohmann::json(nullptr)},
                     {"baseline", r.baseline}};
}

inline void from_json(const nlohmann::json& j, EvalReport& r) {
  r.thresholds = j.at("thresholds").get<RuleThresholds>();
  r.bootstrap = j.at("bootstrap").get<BootstrapSettings>();
  r.patch_span = j.at("patch_span").get<std::string>();
  r.models = j.at("models").get<std::vector<ModelReport>>();
  r.comparison = j.at("comparison").is_null() ? std::nullopt
                                              : std::optional<ModelComparison>(j.at("comparison").get<ModelComparison>());
  r.baseline = j.at("baseline").get<std::vector<AccuracyReport>>();
}

inline std::string report_json(const EvalReport& r) { return nlohmann::json(r).dump(2) + "\n"; }

inline EvalReport parse_report_json(const std::string& text) {
  try {
    return nlohmann::json::parse(text).get<EvalReport>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed report: ") + e.what());
  }
}

inline std::string format_signed(double v, int decimals = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.*f", decimals, v);
  return buf;
}

inline std::string format_ci(const ConfidenceInterval& ci) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.2f [%.2f, %.2f]", ci.mean, ci.lo, ci.hi);
  return buf;
}

// Per-category table. With a comparison it has the effect / PASS_S / PASS_N
// layout; otherwise one mean-gap and pass-rate column per model.
inline std::string category_table_markdown(const EvalReport& r) {
  std::ostringstream md;
  auto model_named = [&](const std::string& name) -> const ModelReport& {
    for (const auto& m : r.models)
      if (m.name == name) return m;
    fail(ErrorKind::kPipeline, "report has no model '" + name + "'");
  };
  auto rate = [](const ModelReport& m, CorruptionCategory c) -> std::optional<double> {
    auto it = m.aggregate.pass_rate_by_category.find(c);
    if (it == m.aggregate.pass_rate_by_category.end()) return std::nullopt;
    return it->second;
  };
  if (r.comparison) {
    const auto& s = model_named(r.comparison->schema_model);
    const auto& n = model_named(r.comparison->baseline_model);
    md << "| Category | Effect (Δ_S − Δ_N) | PASS_S | PASS_N |\n|---|---:|---:|---:|\n";
    for (auto c : kReportCategoryOrder) {
      const auto ps = rate(s, c), pn = rate(n, c);
      if (!ps || !pn) continue;
      const auto effect = r.comparison->effect_by_category.find(c);
      md << "| " << display_name(c) << " | "
         << (effect != r.comparison->effect_by_category.end() ? format_signed(effect->second) : "n/a") << " | "
         << format_percent(*ps, 0) << " | " << format_percent(*pn, 0) << " |\n";
    }
    md << "| Overall | " << format_signed(r.comparison->training_effect.mean) << " | "
       << format_percent(s.aggregate.pass_rate_overall, 0) << " | " << format_percent(n.aggregate.pass_rate_overall, 0)
       << " |\n";
    return md.str();
  }
  md << "| Category |";
  for (const auto& m : r.models) md << " Mean Δ (" << m.name << ") | PASS (" << m.name << ") |";
  md << "\n|---|";
  for (std::size_t i = 0; i < r.models.size(); ++i) md << "---:|---:|";
  md << "\n";
  for (auto c : kReportCategoryOrder) {
    bool present = false;
    for (const auto& m : r.models) present = present || rate(m, c).has_value();
    if (!present) continue;
    md << "| " << display_name(c) << " |";
    for (const auto& m : r.models) {
      const auto p = rate(m, c);
      auto g = m.mean_gap_by_category.find(c);
      md << " " << (g != m.mean_gap_by_category.end() ? format_signed(g->second) : "n/a") << " | "
         << (p ? format_percent(*p, 0) : "n/a") << " |";
    }
    md << "\n";
  }
  md << "| Overall |";
  for (const auto& m : r.models)
    md << " " << format_signed(m.mean_gap.mean) << " | " << format_percent(m.aggregate.pass_rate_overall, 0) << " |";
  md << "\n";
  return md.str();
}

inline std::string report_markdown(const EvalReport& r) {
  std::ostringstream md;
  md << "# Mechanistic evaluation report\n\n";
  md << "Thresholds: tau_gap " << nlohmann::json(r.thresholds.tau_gap).dump() << ", alpha "
     << nlohmann::json(r.thresholds.alpha).dump() << ", top-layer fraction "
     << nlohmann::json(r.thresholds.top_layer_fraction).dump() << "; patch span: " << r.patch_span << "\n\n";

  md << "## Per-category results\n\n" << category_table_markdown(r) << "\n";

  md << "## Models\n\n| Model | Train Schema | Mean Δ [CI] | PASS | R1 | R2 | R3 | Modal Layer | Modal-Layer Usage |\n";
  md << "|---|:---:|---|---:|---:|---:|---:|---:|---:|\n";
  for (const auto& m : r.models) {
    const auto& a = m.aggregate;
    md << "| " << m.name << " | " << (m.train_schema ? "✓" : "✗") << " | " << format_ci(m.mean_gap) << " | "
       << format_percent(a.pass_rate_overall, 0) << " | " << a.n_r1 << " | " << a.n_r2 << " | " << a.n_r3 << " | "
       << (a.modal_layer ? std::to_string(*a.modal_layer) : "none") << " | "
       << format_percent(a.modal_layer_usage, 0) << " |\n";
  }
  md << "\n";

  if (r.comparison)
    md << "Training effect (" << r.comparison->schema_model << " − " << r.comparison->baseline_model
       << "): " << format_ci(r.comparison->training_effect) << "\n\n";

  md << "## Threshold sweep (R3 pass rate)\n\n| tau_gap | alpha | top-layer fraction |";
  for (const auto& m : r.models) md << " " << m.name << " |";
  md << "\n|---:|---:|---:|";
  for (std::size_t i = 0; i < r.models.size(); ++i) md << "---:|";
  md << "\n";
  const std::size_t cells = r.models.empty() ? 0 : r.models.front().sweep.size();
  for (std::size_t i = 0; i < cells; ++i) {
    const auto& t = r.models.front().sweep[i].thresholds;
    md << "| " << nlohmann::json(t.tau_gap).dump() << " | " << nlohmann::json(t.alpha).dump() << " | "
       << nlohmann::json(t.top_layer_fraction).dump() << " |";
    for (const auto& m : r.models) md << " " << (i < m.sweep.size() ? format_percent(m.sweep[i].pass_rate, 0) : "n/a") << " |";
    md << "\n";
  }

  if (!r.baseline.empty()) md << "\n## Standard accuracy\n\n" << accuracy_markdown(r.baseline);
  return md.str();
}

// One row per (model, example).
inline std::string verdicts_csv(std::span<const ModelProfiles> models, const RuleThresholds& thresholds) {
  std::ostringstream csv;
  csv << "model,id,category,gap,rec_frac,best_layer,r1,r2,r3\n";
  for (const auto& m : models) {
    const Verdicts v = verify(m.profiles, thresholds);
    for (std::size_t i = 0; i < m.profiles.size(); ++i) {
      const auto& p = m.profiles[i];
      const auto& o = v.outcomes[i];
      csv << m.name << "," << p.id << "," << to_string(p.category) << "," << nlohmann::json(p.gap).dump() << ","
          << nlohmann::json(p.rec_frac).dump() << "," << p.best_layer << "," << (o.r1 ? 1 : 0) << ","
          << (o.r2 ? 1 : 0) << "," << (o.r3 ? 1 : 0) << "\n";
    }
  }
  return csv.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::kPipeline, "cannot write " + path.string());
  out << text;
  require(out.good(), ErrorKind::kPipeline, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kInput, "cannot open " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// report.json, report.md and report.csv under dir.
inline void emit_report(const EvalReport& r, std::span<const ModelProfiles> models, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require(!ec, ErrorKind::kPipeline, "cannot create output directory " + dir.string());
  write_text(dir / "report.json", report_json(r));
  write_text(dir / "report.md", report_markdown(r));
  write_text(dir / "report.csv", verdicts_csv(models, r.thresholds));
}

}  // namespace mecheval
