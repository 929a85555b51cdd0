#include <gtest/gtest.h>

#include "support.hpp"

using namespace mecheval;
using mecheval::testing::kind_of;

namespace {

struct Suite {
  WordPools pools = mecheval::testing::compact_pools();
  FixtureTokenizer tok = fixture_vocabulary(pools);
  std::vector<PromptPair> pairs = generate_suite(pools, 10, 7, tok);
};

}  // namespace

TEST(Layout, TemplateOffsets) {
  const auto l = oracle::prompt_layout();
  EXPECT_EQ(l.column_offset, 4u);
  EXPECT_EQ(l.table_offset, 8u);
  EXPECT_EQ(l.instruction_column, 3u);
  EXPECT_EQ(l.instruction_table, 5u);
}

TEST(Planted, PassesR3EverywhereOnTheGrid) {
  Suite s;
  const auto pm = oracle::build_planted_model(s.pools);
  const auto model = pm.model();
  const auto profiles = profile_pairs(model, s.pairs, {PatchSpanMode::kFullSpan, 0.9, 4});
  for (const auto& p : profiles) {
    EXPECT_GT(p.gap, 1.0) << p.id;
    EXPECT_EQ(p.rec_frac, 1.0) << p.id;
  }
  for (const auto& cell : threshold_sweep(profiles, ThresholdGrid{})) EXPECT_EQ(cell.pass_rate, 1.0);
  const auto a = aggregate(verify(profiles, {}), profiles);
  EXPECT_EQ(a.pass_rate_overall, 1.0);
  EXPECT_EQ(a.modal_layer, 0u);
}

TEST(Planted, ShiftVanishesAbovePlantedLayer) {
  Suite s;
  oracle::PlantedSpec spec;
  spec.n_layers = 5;
  spec.planted_layer = 1;
  const auto pm = oracle::build_planted_model(s.pools, spec);
  const auto p = profile_pair(pm.model(), s.pairs[0]);
  for (std::size_t l = 0; l <= spec.planted_layer; ++l) EXPECT_EQ(p.shift_by_layer[l], p.gap);
  for (std::size_t l = spec.planted_layer + 1; l < spec.n_layers; ++l) EXPECT_EQ(p.shift_by_layer[l], 0.0);
}

TEST(Bypass, HasNoSchemaSensitivity) {
  Suite s;
  const auto corpus = build_fixture_corpus(s.pools, 60, 3);
  const auto bm = oracle::build_bypass_model(s.pools, corpus.train);
  const auto profiles = profile_pairs(bm.model(), s.pairs);
  for (const auto& p : profiles) EXPECT_EQ(p.gap, 0.0) << p.id;
  for (const auto& cell : threshold_sweep(profiles, ThresholdGrid{})) EXPECT_EQ(cell.r1_rate, 0.0);
}

TEST(Construction, RejectsInvalidSpecs) {
  Suite s;
  oracle::PlantedSpec top;
  top.planted_layer = 3;
  EXPECT_EQ(kind_of([&] { oracle::build_planted_model(s.pools, top); }), ErrorKind::kConfig);
  oracle::PlantedSpec narrow;
  narrow.d_model = 8;
  EXPECT_EQ(kind_of([&] { oracle::build_planted_model(s.pools, narrow); }), ErrorKind::kConfig);
  const std::vector<SqlExample> clash{{"Show url from archive", "", "SELECT website FROM backup"},
                                      {"Show url from archive", "", "SELECT price FROM backup"}};
  EXPECT_EQ(kind_of([&] { oracle::instruction_answer_map(clash); }), ErrorKind::kInput);
}

TEST(Differential, PlantedAndBypassAgreeWithOracle) {
  Suite s;
  const auto pm = oracle::build_planted_model(s.pools);
  const auto planted = oracle::differential_check(pm.archive, pm.config, s.pairs, {}, PatchSpanMode::kFullSpan, 4);
  EXPECT_TRUE(planted.clean()) << planted.disagreements.front().id << " " << planted.disagreements.front().field;
  EXPECT_EQ(planted.n_ambiguous, 0u);
  const auto corpus = build_fixture_corpus(s.pools, 60, 3);
  const auto bm = oracle::build_bypass_model(s.pools, corpus.train);
  const auto bypass = oracle::differential_check(bm.archive, bm.config, s.pairs, {}, PatchSpanMode::kFullSpan, 4);
  EXPECT_TRUE(bypass.clean());
}

TEST(Differential, RandomModelsAgreeWithOracle) {
  const auto r = oracle::random_differential_check(30, 4, 500, {0.1, 0.5, 0.8}, 4);
  EXPECT_EQ(r.n_models, 30u);
  EXPECT_TRUE(r.clean()) << r.disagreements.front().id << " " << r.disagreements.front().field;
  EXPECT_LT(2 * r.n_ambiguous, r.n_decisions);
}

TEST(Differential, FirstTokenModeAgreesWithOracle) {
  const auto rm = oracle::random_tiny_model(8);
  const auto pairs = oracle::random_pairs(rm.config, 5, 8);
  EXPECT_TRUE(oracle::differential_check(rm.archive, rm.config, pairs, {0.1, 0.5, 0.8}, PatchSpanMode::kFirstToken).clean());
}

TEST(Differential, DetectsPerturbedEngineOutput) {
  const auto rm = oracle::random_tiny_model(9);
  const auto pairs = oracle::random_pairs(rm.config, 3, 9);
  const Model model = Model::load(rm.archive, rm.config);
  auto profiles = profile_pairs(model, pairs);
  const auto verdicts = verify(profiles, {});
  const auto ref = oracle::brute_force_pipeline(rm.archive, rm.config, pairs, {});
  ASSERT_TRUE(oracle::compare_with_oracle(profiles, verdicts, ref).clean());
  profiles[1].gap += 0.05;
  EXPECT_FALSE(oracle::compare_with_oracle(profiles, verdicts, ref).clean());
}
