#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "support.hpp"

using namespace mecheval;
using mecheval::testing::kind_of;

TEST(Config, JsonRoundTripKeepsLocalWindows) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_head = 4;
  c.vocab_size = 10;
  c.max_seq_len = 16;
  c.attention_pattern = {AttentionSpan{}, AttentionSpan{4}};
  const nlohmann::json j = c;
  EXPECT_EQ(j["attention_pattern"][1], "local(4)");
  EXPECT_EQ(j.get<ModelConfig>(), c);
}

TEST(Config, RejectsInconsistentWidths) {
  nlohmann::json j = {{"n_layers", 1},      {"d_model", 10},       {"n_heads", 3},
                      {"d_head", 3},        {"vocab_size", 5},     {"max_seq_len", 4},
                      {"layernorm_epsilon", 1e-5}, {"positional_encoding", "learned-absolute"},
                      {"attention_pattern", {"global"}}};
  EXPECT_EQ(kind_of([&] { (void)j.get<ModelConfig>(); }), ErrorKind::kConfig);
  j["d_model"] = 9;
  j["attention_pattern"] = {"sliding"};
  EXPECT_EQ(kind_of([&] { (void)j.get<ModelConfig>(); }), ErrorKind::kConfig);
}

TEST(TensorArchive, SerializeLayoutAndRoundTrip) {
  TensorArchive a;
  a.put("b", {2}, {1.5f, -2.0f});
  a.put("a", {1, 3}, {0.0f, 1e-30f, 7.0f});
  a.metadata()["format"] = "pt";
  const auto bytes = a.serialize();
  std::uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= std::uint64_t{bytes[i]} << (8 * i);
  EXPECT_EQ((8 + header_len) % 8, 0u);
  EXPECT_EQ(bytes.size(), 8 + header_len + 5 * sizeof(float));
  const auto b = TensorArchive::deserialize(bytes);
  EXPECT_EQ(b.at("a").data, a.at("a").data);
  EXPECT_EQ(b.at("b").shape, a.at("b").shape);
  EXPECT_EQ(b.metadata().at("format"), "pt");
  EXPECT_EQ(b.serialize(), bytes);
}

TEST(TensorArchive, ReadsReferenceWriterOutput) {
  const auto a = TensorArchive::load(std::string(MECHEVAL_TEST_DATA) + "/tiny.safetensors");
  std::ifstream in(std::string(MECHEVAL_TEST_DATA) + "/tiny_expected.json");
  const auto expected = nlohmann::json::parse(in);
  ASSERT_EQ(a.tensors().size(), expected.size());
  for (const auto& [name, e] : expected.items()) {
    EXPECT_EQ(a.at(name).shape, e["shape"].get<std::vector<std::size_t>>()) << name;
    const auto data = e["data"].get<std::vector<double>>();
    ASSERT_EQ(a.at(name).data.size(), data.size());
    for (std::size_t i = 0; i < data.size(); ++i) EXPECT_EQ(a.at(name).data[i], static_cast<float>(data[i]));
  }
  EXPECT_EQ(a.metadata().at("format"), "np");
}

TEST(TensorArchive, RejectsCorruptFiles) {
  TensorArchive a;
  a.put("x", {2}, {1.0f, 2.0f});
  auto bytes = a.serialize();
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  EXPECT_EQ(kind_of([&] { TensorArchive::deserialize(truncated); }), ErrorKind::kModelLoad);
  auto huge = bytes;
  huge[7] = 0x7f;
  EXPECT_EQ(kind_of([&] { TensorArchive::deserialize(huge); }), ErrorKind::kModelLoad);
  EXPECT_EQ(kind_of([&] { TensorArchive::deserialize(std::vector<std::uint8_t>(4, 0)); }), ErrorKind::kModelLoad);
}

TEST(Model, LoadNamesMissingTensor) {
  auto rm = oracle::random_tiny_model(3);
  rm.archive.erase("blocks.0.attn.w_q");
  try {
    Model::load(rm.archive, rm.config);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kModelLoad);
    EXPECT_NE(std::string(e.what()).find("blocks.0.attn.w_q"), std::string::npos);
  }
}

TEST(Model, LoadRejectsShapeMismatchAndNonFinite) {
  auto rm = oracle::random_tiny_model(3);
  auto bad_shape = rm.archive;
  bad_shape.put("ln_f.bias", {rm.config.d_model + 1}, std::vector<float>(rm.config.d_model + 1));
  EXPECT_EQ(kind_of([&] { Model::load(bad_shape, rm.config); }), ErrorKind::kModelLoad);
  auto nan = rm.archive;
  nan.mutable_at("wte").data[0] = std::nanf("");
  EXPECT_EQ(kind_of([&] { Model::load(nan, rm.config); }), ErrorKind::kModelLoad);
}

TEST(Forward, RejectsBadInput) {
  auto rm = oracle::random_tiny_model(3);
  const Model m = Model::load(rm.archive, rm.config);
  EXPECT_EQ(kind_of([&] { forward(m, {}, false); }), ErrorKind::kPipeline);
  EXPECT_EQ(kind_of([&] { forward(m, TokenSequence(rm.config.max_seq_len + 1, 0), false); }), ErrorKind::kPipeline);
  EXPECT_EQ(kind_of([&] { forward(m, {static_cast<TokenId>(rm.config.vocab_size)}, false); }), ErrorKind::kPipeline);
}

TEST(Forward, AttentionRowsAreDistributionsOverVisibleKeys) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rm = oracle::random_tiny_model(seed);
    const Model m = Model::load(rm.archive, rm.config);
    const auto pairs = oracle::random_pairs(rm.config, 1, seed);
    const auto r = run_forward(m, pairs[0].clean, {}, ForwardOptions{false, true});
    ASSERT_TRUE(r.attention.has_value());
    const std::size_t n = pairs[0].clean.size();
    for (std::size_t l = 0; l < rm.config.n_layers; ++l)
      for (std::size_t h = 0; h < rm.config.n_heads; ++h)
        for (std::size_t q = 0; q < n; ++q) {
          const auto row = r.attention->row(l, h, q);
          double sum = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            if (k > q) {
              EXPECT_EQ(row[k], 0.0f);
            }
            sum += row[k];
          }
          EXPECT_NEAR(sum, 1.0, 1e-5);
        }
  }
}

TEST(Forward, IsCausal) {
  auto rm = oracle::random_tiny_model(11);
  const Model m = Model::load(rm.archive, rm.config);
  TokenSequence a{1, 2, 3, 4, 5};
  TokenSequence b = a;
  b.back() = 0;
  const auto la = forward(m, a, false).logits;
  const auto lb = forward(m, b, false).logits;
  for (std::size_t p = 0; p + 1 < a.size(); ++p)
    for (std::size_t t = 0; t < la.vocab_size; ++t) EXPECT_EQ(la.row(p)[t], lb.row(p)[t]);
}

TEST(Forward, MatchesReferenceOnRandomModels) {
  for (std::uint64_t seed = 100; seed < 120; ++seed) {
    auto rm = oracle::random_tiny_model(seed);
    const Model m = Model::load(rm.archive, rm.config);
    const auto tokens = oracle::random_pairs(rm.config, 1, seed)[0].clean;
    const auto got = forward(m, tokens, false).logits;
    const auto want = oracle::reference_forward(rm.archive, rm.config, tokens).logits;
    for (std::size_t p = 0; p < tokens.size(); ++p) {
      double err = 0.0, scale = 0.0;
      for (std::size_t t = 0; t < rm.config.vocab_size; ++t) {
        err = std::max(err, std::fabs(got.row(p)[t] - want[p][t]));
        scale = std::max(scale, std::fabs(want[p][t]));
      }
      EXPECT_LE(err, 1e-4 * scale) << "seed " << seed << " position " << p;
    }
  }
}

TEST(Forward, CountsPasses) {
  auto rm = oracle::random_tiny_model(3);
  const Model m = Model::load(rm.archive, rm.config);
  const auto before = diagnostics::forward_passes();
  forward(m, {1, 2}, false);
  forward_patched(m, {1, 2}, {});
  EXPECT_EQ(diagnostics::forward_passes(), before + 2);
}

TEST(ModelDir, SaveAndLoadRoundTrip) {
  const auto pools = mecheval::testing::compact_pools();
  const auto pm = oracle::build_planted_model(pools);
  const auto dir = mecheval::testing::scratch_dir("model_dir");
  pm.save(dir);
  const LoadedModel loaded = load_model_dir(dir);
  EXPECT_EQ(loaded.model.config(), pm.config);
  const auto text = "### Instruction: Show cost from archive ### Context: CREATE TABLE backup (price TEXT) ###Response: SELECT";
  const auto ids = loaded.tokenizer->encode(text);
  EXPECT_EQ(forward(loaded.model, ids, false).logits, forward(pm.model(), ids, false).logits);
}

TEST(ModelDir, MissingFilesAreModelLoadErrors) {
  const auto dir = mecheval::testing::scratch_dir("model_dir_missing");
  EXPECT_EQ(kind_of([&] { load_model_dir(dir / "nope"); }), ErrorKind::kModelLoad);
  EXPECT_EQ(kind_of([&] { load_model_dir(dir); }), ErrorKind::kModelLoad);
}
