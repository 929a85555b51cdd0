#include <gtest/gtest.h>

#include <fstream>

#include "support.hpp"

using namespace mecheval;
using mecheval::testing::kind_of;

namespace {

std::vector<PatchProfile> synthetic(const std::string& model, std::uint64_t seed, double scale) {
  Rng rng({seed});
  std::vector<PatchProfile> out;
  for (std::size_t i = 0; i < 50; ++i) {
    const double gap = scale * (0.5 + rng.uniform());
    auto p = build_profile(gap, 0.0, {gap * rng.uniform(), gap, 0.1 * gap});
    p.id = "pair-" + std::to_string(i);
    p.model = model;
    p.category = kAllCategories[i % kAllCategories.size()];
    out.push_back(p);
  }
  return out;
}

std::vector<ModelProfiles> two_models() {
  return {{"schema", true, synthetic("schema", 1, 2.0)}, {"plain", false, synthetic("plain", 2, 0.6)}};
}

EvalReport report_of(const std::vector<ModelProfiles>& models) {
  return build_report(models, {}, {0.95, 500, 11}, ThresholdGrid{}, "span");
}

}  // namespace

TEST(Report, OverallRowShowsBothPassRates) {
  EvalReport r;
  ModelReport s, n;
  s.name = "S";
  s.train_schema = true;
  s.aggregate.pass_rate_overall = 0.76;
  n.name = "N";
  n.aggregate.pass_rate_overall = 0.59;
  r.models = {s, n};
  r.comparison = ModelComparison{"S", "N", {}, {0.5, 0.1, 0.9}};
  const auto md = category_table_markdown(r);
  EXPECT_NE(md.find("| Overall | +0.50 | 76% | 59% |"), std::string::npos) << md;
  EXPECT_NE(md.find("76% | 59%"), std::string::npos);
}

TEST(Report, EmptyCategoryMapGivesOverallRowOnly) {
  EvalReport r;
  ModelReport m;
  m.name = "only";
  r.models = {m};
  const auto md = category_table_markdown(r);
  EXPECT_EQ(std::count(md.begin(), md.end(), '\n'), 3);
  EXPECT_NE(md.find("| Overall |"), std::string::npos);
}

TEST(Report, JsonRoundTripIsByteIdentical) {
  const auto r = report_of(two_models());
  const auto text = report_json(r);
  const auto back = parse_report_json(text);
  EXPECT_EQ(back, r);
  EXPECT_EQ(report_json(back), text);
  EXPECT_EQ(kind_of([] { parse_report_json("{\"models\": 3}"); }), ErrorKind::kInput);
}

TEST(Report, TrainingEffectIsDifferenceOfMeans) {
  const auto models = two_models();
  const auto r = report_of(models);
  ASSERT_TRUE(r.comparison.has_value());
  EXPECT_EQ(r.comparison->schema_model, "schema");
  EXPECT_EQ(r.comparison->training_effect.mean, r.models[0].mean_gap.mean - r.models[1].mean_gap.mean);
  EXPECT_LE(r.comparison->training_effect.lo, r.comparison->training_effect.mean);
  EXPECT_GE(r.comparison->training_effect.hi, r.comparison->training_effect.mean);
  for (const auto& [c, e] : r.comparison->effect_by_category)
    EXPECT_EQ(e, r.models[0].mean_gap_by_category.at(c) - r.models[1].mean_gap_by_category.at(c));
}

TEST(Report, SingleModelHasNoComparison) {
  const auto models = two_models();
  const std::vector<ModelProfiles> one{models[0]};
  const auto r = report_of(one);
  EXPECT_FALSE(r.comparison.has_value());
  EXPECT_TRUE(nlohmann::json::parse(report_json(r)).at("comparison").is_null());
  EXPECT_EQ(report_markdown(r).find("Training effect"), std::string::npos);
  EXPECT_EQ(report_markdown(r).find("PASS_S"), std::string::npos);
}

TEST(Report, ComparisonNeedsMatchingPairSets) {
  auto models = two_models();
  models[1].profiles.pop_back();
  EXPECT_EQ(kind_of([&] { report_of(models); }), ErrorKind::kPipeline);
}

TEST(RunConfig, RejectsMissingSeedAndMalformedFields) {
  const auto dir = mecheval::testing::scratch_dir("config");
  std::filesystem::create_directories(dir / "m");
  const nlohmann::json base = {{"models", {{{"name", "a"}, {"path", "m"}}}},
                               {"pairs", {{"pools", std::string(MECHEVAL_DATA) + "/pools_compact.json"}}}};
  auto write = [&](const nlohmann::json& j) {
    std::ofstream(dir / "c.json") << j.dump();
    return dir / "c.json";
  };
  EXPECT_EQ(kind_of([&] { load_run_config(write(base)).validate(); }), ErrorKind::kConfig);
  auto seeded = base;
  seeded["pairs"]["seed"] = 3;
  EXPECT_NO_THROW(load_run_config(write(seeded)).validate());
  auto bad_alpha = seeded;
  bad_alpha["thresholds"] = {{"tau_gap", 0.4}, {"alpha", 2.0}, {"top_layer_fraction", 0.9}};
  EXPECT_EQ(kind_of([&] { load_run_config(write(bad_alpha)).validate(); }), ErrorKind::kConfig);
  auto wrong_type = seeded;
  wrong_type["models"] = "a";
  EXPECT_EQ(kind_of([&] { load_run_config(write(wrong_type)); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { load_run_config(dir / "absent.json"); }), ErrorKind::kConfig);
}

TEST(Pipeline, RunsAreBitIdenticalAndReportNeedsNoForwardPass) {
  const auto pools = mecheval::testing::compact_pools();
  const auto dir = mecheval::testing::scratch_dir("pipeline");
  const auto corpus = build_fixture_corpus(pools, 60, 3);
  oracle::build_planted_model(pools).save(dir / "planted");
  oracle::build_bypass_model(pools, corpus.train).save(dir / "bypass");
  save_examples(corpus.test, (dir / "test.jsonl").string());

  RunConfig c;
  c.models = {{"planted", (dir / "planted").string(), true}, {"bypass", (dir / "bypass").string(), false}};
  c.pairs.pools = std::string(MECHEVAL_DATA) + "/pools_compact.json";
  c.pairs.per_category = 4;
  c.pairs.seed = 5;
  c.bootstrap.resamples = 300;
  c.baseline = BaselineSettings{(dir / "test.jsonl").string(), {false, true}};
  c.workers = 3;

  auto files = [](const std::filesystem::path& out) {
    std::string all;
    for (const char* f : {"profiles.jsonl", "verdicts.jsonl", "report.json", "report.md", "report.csv", "baseline.json"})
      all += read_text(out / f);
    return all;
  };
  c.output_dir = (dir / "one").string();
  const auto first = run(c);
  c.output_dir = (dir / "two").string();
  c.workers = 1;
  const auto second = run(c);
  EXPECT_EQ(first, second);
  EXPECT_EQ(files(dir / "one"), files(dir / "two"));

  ASSERT_TRUE(first.comparison.has_value());
  EXPECT_EQ(first.models[0].aggregate.pass_rate_overall, 1.0);
  EXPECT_EQ(first.models[1].aggregate.n_r1, 0u);

  const auto before = diagnostics::forward_passes();
  const auto runs = load_profiles(c, std::filesystem::path(c.output_dir) / "profiles.jsonl");
  c.thresholds.tau_gap = 0.25;
  const auto rerun = run_report(c, runs);
  EXPECT_EQ(diagnostics::forward_passes(), before);
  EXPECT_EQ(rerun.models[0].aggregate.pass_rate_overall, 1.0);
}
