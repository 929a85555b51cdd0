#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace mecheval;
using mecheval::testing::kind_of;

TEST(BuildProfile, PositiveGap) {
  const auto p = build_profile(3.0, 1.0, {0.5, 2.4, 1.9});
  EXPECT_EQ(p.gap, 2.0);
  EXPECT_DOUBLE_EQ(p.best_recovery, 2.4);
  EXPECT_EQ(p.rec_frac, 1.0);
  EXPECT_EQ(p.best_layer, 1u);
  EXPECT_EQ(p.top_layers, (std::vector<std::size_t>{1, 2}));
}

TEST(BuildProfile, NegativeGapUsesSignedRecovery) {
  const auto p = build_profile(0.0, 1.0, {0.9, -0.95});
  EXPECT_EQ(p.gap, -1.0);
  EXPECT_DOUBLE_EQ(p.best_recovery, 0.95);
  EXPECT_DOUBLE_EQ(p.rec_frac, 0.95);
  EXPECT_EQ(p.best_layer, 1u);
  EXPECT_EQ(p.top_layers, (std::vector<std::size_t>{1}));
}

TEST(BuildProfile, ZeroGap) {
  const auto p = build_profile(1.0, 1.0, {0.3, -0.2});
  EXPECT_EQ(p.rec_frac, 0.0);
  EXPECT_TRUE(p.top_layers.empty());
  EXPECT_EQ(p.best_layer, 0u);
}

TEST(BuildProfile, TiesGoToLowestLayer) {
  EXPECT_EQ(build_profile(2.0, 0.0, {1.0, 2.0, 2.0}).best_layer, 1u);
  EXPECT_EQ(build_profile(2.0, 0.0, {-1.0, -3.0}).best_layer, 0u);
}

TEST(BuildProfile, RecoveryFractionStaysInUnitInterval) {
  Rng rng({77});
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> shifts(1 + rng.index(6));
    for (double& s : shifts) s = 4.0 * rng.normal();
    const double clean = rng.index(10) == 0 ? 0.5 : 3.0 * rng.normal();
    const double corr = rng.index(10) == 0 ? clean : 3.0 * rng.normal();
    const auto p = build_profile(clean, corr, shifts);
    ASSERT_GE(p.rec_frac, 0.0);
    ASSERT_LE(p.rec_frac, 1.0);
    ASSERT_LT(p.best_layer, shifts.size());
  }
}

TEST(BuildProfile, JsonRoundTrip) {
  auto p = build_profile(3.0, 1.0, {0.5, 2.4, 1.9}, 0.8);
  p.id = "x";
  p.model = "m";
  p.category = CorruptionCategory::kSuperScramble;
  EXPECT_EQ(nlohmann::json(p).get<PatchProfile>(), p);
}

namespace {

struct Fixture {
  oracle::RandomModel rm = oracle::random_tiny_model(21);
  Model model = Model::load(rm.archive, rm.config);
  std::vector<PromptPair> pairs = oracle::random_pairs(rm.config, 6, 21);
};

}  // namespace

TEST(Engine, SelfPatchIsNull) {
  Fixture f;
  for (const auto& pair : f.pairs) {
    const auto corr = forward(f.model, pair.corrupted, true);
    const double corr_diff = logit_diff(corr.logits, pair);
    for (double s : layer_sweep(f.model, pair, *corr.cache, corr_diff)) EXPECT_LT(std::fabs(s), 1e-6);
  }
}

TEST(Engine, EmptyPatchEqualsUnpatchedForward) {
  Fixture f;
  for (const auto& pair : f.pairs)
    EXPECT_EQ(forward_patched(f.model, pair.corrupted, {}), forward(f.model, pair.corrupted, false).logits);
}

TEST(Engine, PatchingEveryPositionAtTopLayerRestoresCleanLogits) {
  Fixture f;
  const auto& pair = f.pairs[0];
  const auto clean = forward(f.model, pair.clean, true);
  const std::size_t top = f.rm.config.n_layers - 1;
  std::vector<Patch> patches;
  for (std::size_t p = 0; p < pair.clean.size(); ++p) {
    const auto v = clean.cache->at(top, p);
    patches.push_back({top, p, {v.begin(), v.end()}});
  }
  EXPECT_EQ(forward_patched(f.model, pair.corrupted, patches), clean.logits);
}

TEST(Engine, PatchOnlyAffectsLaterPositions) {
  Fixture f;
  const auto& pair = f.pairs[1];
  const auto clean = forward(f.model, pair.clean, true);
  const auto v = clean.cache->at(0, pair.span_begin);
  const auto patched = forward_patched(f.model, pair.corrupted, std::vector<Patch>{{0, pair.span_begin, {v.begin(), v.end()}}});
  const auto base = forward(f.model, pair.corrupted, false).logits;
  for (std::size_t p = 0; p < pair.span_begin; ++p)
    for (std::size_t t = 0; t < f.rm.config.vocab_size; ++t) EXPECT_EQ(patched.row(p)[t], base.row(p)[t]);
}

TEST(Engine, ParallelProfilesEqualSerial) {
  Fixture f;
  ProfileOptions serial, parallel;
  parallel.workers = 4;
  EXPECT_EQ(profile_pairs(f.model, f.pairs, serial), profile_pairs(f.model, f.pairs, parallel));
}

TEST(Engine, FirstTokenModePatchesOnePosition) {
  Fixture f;
  PromptPair pair = f.pairs[0];
  EXPECT_EQ(patch_positions(pair, PatchSpanMode::kFirstToken).size(), std::min<std::size_t>(1, pair.span_size()));
  EXPECT_EQ(patch_positions(pair, PatchSpanMode::kFullSpan).size(), pair.span_size());
  EXPECT_EQ(parse_patch_span_mode("first"), PatchSpanMode::kFirstToken);
  EXPECT_EQ(kind_of([] { parse_patch_span_mode("all"); }), ErrorKind::kConfig);
}

TEST(Engine, RejectsMismatchedCacheAndBadTokens) {
  Fixture f;
  const auto& pair = f.pairs[0];
  ResidualCache wrong;
  EXPECT_EQ(kind_of([&] { layer_sweep(f.model, pair, wrong, 0.0); }), ErrorKind::kPipeline);
  PromptPair bad = pair;
  bad.correct_token = static_cast<TokenId>(f.rm.config.vocab_size + 3);
  EXPECT_EQ(kind_of([&] { profile_pair(f.model, bad); }), ErrorKind::kPipeline);
}

TEST(Engine, SweepMatchesOracleShifts) {
  Fixture f;
  const auto profiles = profile_pairs(f.model, f.pairs);
  const auto oracle = oracle::brute_force_pipeline(f.rm.archive, f.rm.config, f.pairs, {});
  for (std::size_t i = 0; i < f.pairs.size(); ++i)
    for (std::size_t l = 0; l < f.rm.config.n_layers; ++l)
      EXPECT_NEAR(profiles[i].shift_by_layer[l], oracle.profiles[i].shifts[l],
                  1e-5 * std::max(1.0, std::fabs(oracle.profiles[i].shifts[l])));
}
