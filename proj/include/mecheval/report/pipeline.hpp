#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "mecheval/baseline/evaluate.hpp"
#include "mecheval/core/error.hpp"
#include "mecheval/core/jsonl.hpp"
#include "mecheval/core/parallel.hpp"
#include "mecheval/corruption/generate.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/corruption/prompt.hpp"
#include "mecheval/patching/engine.hpp"
#include "mecheval/report/report.hpp"
#include "mecheval/runtime/forward.hpp"
#include "mecheval/runtime/model_dir.hpp"

namespace mecheval {

struct ModelEntry {
  std::string name;
  std::string path;
  bool train_schema = false;
};

struct PairsSource {
  std::string source = "generate";  // "generate" or "file"
  std::string pools;                // generate
  std::size_t per_category = 20;    // generate
  std::optional<std::uint64_t> seed;
  std::string path;                 // file
};

struct BaselineSettings {
  std::string test_set;  // .jsonl or .csv of SqlExample
  std::vector<bool> eval_schema{false, true};
};

struct RunConfig {
  std::vector<ModelEntry> models;
  PairsSource pairs;
  RuleThresholds thresholds;
  BootstrapSettings bootstrap;
  ThresholdGrid threshold_grid;
  PatchSpanMode patch_span = PatchSpanMode::kFullSpan;
  std::optional<BaselineSettings> baseline;
  std::string output_dir = "out";
  std::size_t workers = 0;  // 0: hardware concurrency

  std::size_t worker_count() const { return workers == 0 ? default_workers() : workers; }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) { require(ok, ErrorKind::kConfig, "invalid run config: " + msg); };
    check(!models.empty() && models.size() <= 2, "expected one or two models");
    for (const auto& m : models) {
      check(!m.name.empty(), "model name missing");
      check(std::filesystem::is_directory(m.path), "model path '" + m.path + "' does not exist");
    }
    if (models.size() == 2) check(models[0].name != models[1].name, "model names must differ");
    if (pairs.source == "generate") {
      check(pairs.seed.has_value(), "pairs.seed is required when generating pairs");
      check(std::filesystem::exists(pairs.pools), "pools file '" + pairs.pools + "' does not exist");
      check(pairs.per_category >= 1, "pairs.per_category must be >= 1");
    } else if (pairs.source == "file") {
      check(std::filesystem::exists(pairs.path), "pairs file '" + pairs.path + "' does not exist");
    } else {
      check(false, "pairs.source must be 'generate' or 'file'");
    }
    if (baseline) check(std::filesystem::exists(baseline->test_set), "baseline test set '" + baseline->test_set + "' does not exist");
    thresholds.validate();
    check(bootstrap.confidence > 0.0 && bootstrap.confidence < 1.0, "bootstrap.confidence must lie in (0, 1)");
    check(bootstrap.resamples >= 1, "bootstrap.resamples must be >= 1");
    check(!output_dir.empty(), "output_dir is empty");
  }
};

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  try {
    for (const auto& m : j.at("models"))
      c.models.push_back({m.at("name").get<std::string>(), m.at("path").get<std::string>(),
                          m.value("train_schema", false)});
    const auto& p = j.at("pairs");
    c.pairs.source = p.value("source", std::string("generate"));
    c.pairs.pools = p.value("pools", std::string());
    c.pairs.per_category = p.value("per_category", c.pairs.per_category);
    if (p.contains("seed")) c.pairs.seed = p.at("seed").get<std::uint64_t>();
    c.pairs.path = p.value("path", std::string());
    if (j.contains("thresholds")) c.thresholds = j.at("thresholds").get<RuleThresholds>();
    if (j.contains("bootstrap")) c.bootstrap = j.at("bootstrap").get<BootstrapSettings>();
    if (j.contains("threshold_grid")) c.threshold_grid = j.at("threshold_grid").get<ThresholdGrid>();
    if (j.contains("patch_span")) c.patch_span = parse_patch_span_mode(j.at("patch_span").get<std::string>());
    if (j.contains("baseline") && !j.at("baseline").is_null()) {
      BaselineSettings b;
      b.test_set = j.at("baseline").at("test_set").get<std::string>();
      if (j.at("baseline").contains("eval_schema")) b.eval_schema = j.at("baseline").at("eval_schema").get<std::vector<bool>>();
      c.baseline = b;
    }
    c.output_dir = j.value("output_dir", c.output_dir);
    c.workers = j.value("workers", c.workers);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("malformed run config: ") + e.what());
  }
}

// Relative paths in the file resolve against the file's directory.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open run config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, "cannot parse run config " + path.string() + ": " + e.what());
  }
  RunConfig c = j.get<RunConfig>();
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  for (auto& m : c.models) resolve(m.path);
  resolve(c.pairs.pools);
  resolve(c.pairs.path);
  if (c.baseline) resolve(c.baseline->test_set);
  resolve(c.output_dir);
  return c;
}

inline std::vector<PromptPair> prepare_pairs(const RunConfig& c, const Tokenizer& tokenizer) {
  if (c.pairs.source == "file") return read_jsonl<PromptPair>(c.pairs.path);
  return generate_suite(load_pools(c.pairs.pools), c.pairs.per_category, *c.pairs.seed, tokenizer);
}

inline std::vector<PatchProfile> profile_model(const Model& model, std::span<const PromptPair> pairs,
                                               const std::string& name, const RunConfig& c) {
  ProfileOptions opt;
  opt.span_mode = c.patch_span;
  opt.top_layer_fraction = c.thresholds.top_layer_fraction;
  opt.workers = c.worker_count();
  auto profiles = profile_pairs(model, pairs, opt);
  for (auto& p : profiles) p.model = name;
  return profiles;
}

inline LoadedModel load_entry(const ModelEntry& m) { return load_model_dir(m.path); }

// Generates or reads pairs, profiles every model, and writes
// pairs-<model>.jsonl and profiles.jsonl.
inline std::vector<ModelProfiles> run_profiles(const RunConfig& c) {
  const std::filesystem::path out(c.output_dir);
  std::filesystem::create_directories(out);
  std::vector<ModelProfiles> runs;
  std::vector<PatchProfile> all;
  for (const auto& entry : c.models) {
    const LoadedModel loaded = load_entry(entry);
    const auto pairs = prepare_pairs(c, *loaded.tokenizer);
    require(!pairs.empty(), ErrorKind::kPipeline, "no prompt pairs to profile");
    write_jsonl(pairs, (out / ("pairs-" + entry.name + ".jsonl")).string());
    ModelProfiles m{entry.name, entry.train_schema, profile_model(loaded.model, pairs, entry.name, c)};
    all.insert(all.end(), m.profiles.begin(), m.profiles.end());
    runs.push_back(std::move(m));
  }
  write_jsonl(all, (out / "profiles.jsonl").string());
  return runs;
}

// Regroups a profiles.jsonl by model, in config order.
inline std::vector<ModelProfiles> load_profiles(const RunConfig& c, const std::filesystem::path& path) {
  const auto all = read_jsonl<PatchProfile>(path.string());
  std::vector<ModelProfiles> runs;
  for (const auto& entry : c.models) {
    ModelProfiles m{entry.name, entry.train_schema, {}};
    for (const auto& p : all)
      if (p.model == entry.name) m.profiles.push_back(p);
    require(!m.profiles.empty(), ErrorKind::kPipeline,
            "profiles file " + path.string() + " has no records for model '" + entry.name + "'");
    runs.push_back(std::move(m));
  }
  return runs;
}

inline std::vector<RuleOutcome> run_verify(std::span<const ModelProfiles> runs, const RuleThresholds& t,
                                           const std::filesystem::path& out_dir) {
  std::vector<RuleOutcome> outcomes;
  for (const auto& m : runs) {
    const Verdicts v = verify(m.profiles, t);
    outcomes.insert(outcomes.end(), v.outcomes.begin(), v.outcomes.end());
  }
  std::filesystem::create_directories(out_dir);
  write_jsonl(outcomes, (out_dir / "verdicts.jsonl").string());
  return outcomes;
}

// Standard-accuracy matrix; writes baseline.json, baseline.csv, baseline.md.
inline std::vector<AccuracyReport> run_baseline(const RunConfig& c) {
  require(c.baseline.has_value(), ErrorKind::kConfig, "run config has no baseline section");
  const auto test_set = load_examples(c.baseline->test_set);
  require(!test_set.empty(), ErrorKind::kInput, "baseline test set is empty");
  std::vector<LoadedModel> loaded;
  for (const auto& entry : c.models) loaded.push_back(load_entry(entry));
  std::vector<BaselineModel> models;
  for (std::size_t i = 0; i < loaded.size(); ++i)
    models.push_back({c.models[i].train_schema, &loaded[i].model, loaded[i].tokenizer.get()});
  auto rows = run_matrix(models, test_set, c.baseline->eval_schema, c.worker_count());
  const std::filesystem::path out(c.output_dir);
  std::filesystem::create_directories(out);
  write_text(out / "baseline.json", nlohmann::json(rows).dump(2) + "\n");
  write_text(out / "baseline.csv", accuracy_csv(rows));
  write_text(out / "baseline.md", accuracy_markdown(rows));
  return rows;
}

inline std::vector<AccuracyReport> load_baseline_rows(const std::filesystem::path& dir) {
  const auto path = dir / "baseline.json";
  if (!std::filesystem::exists(path)) return {};
  try {
    return nlohmann::json::parse(read_text(path)).get<std::vector<AccuracyReport>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInput, "malformed " + path.string() + ": " + e.what());
  }
}

// Report from profiles already on disk; performs no forward pass.
inline EvalReport run_report(const RunConfig& c, std::span<const ModelProfiles> runs) {
  const std::filesystem::path out(c.output_dir);
  EvalReport r = build_report(runs, c.thresholds, c.bootstrap, c.threshold_grid, std::string(to_string(c.patch_span)),
                              load_baseline_rows(out), c.worker_count());
  emit_report(r, runs, out);
  write_text(out / "diagnostics.json",
             nlohmann::json{{"forward_passes", diagnostics::forward_passes()}}.dump(2) + "\n");
  return r;
}

// Every stage in order.
inline EvalReport run(const RunConfig& c) {
  c.validate();
  const auto runs = run_profiles(c);
  run_verify(runs, c.thresholds, c.output_dir);
  if (c.baseline) run_baseline(c);
  return run_report(c, runs);
}

}  // namespace mecheval
