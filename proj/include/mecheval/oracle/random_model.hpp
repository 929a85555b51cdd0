#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mecheval/core/random.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/patching/prompt_pair.hpp"
#include "mecheval/runtime/model.hpp"

namespace mecheval::oracle {

struct RandomModel {
  ModelConfig config;
  TensorArchive archive;
};

// Small model with Gaussian weights and a random mix of global and local
// attention, for differential tests against the reference forward pass.
inline RandomModel random_tiny_model(std::uint64_t seed) {
  Rng rng({seed, 0x7A11ull});
  ModelConfig c;
  c.n_layers = 1 + rng.index(4);
  c.n_heads = 1 + rng.index(3);
  c.d_head = 2 + rng.index(5);
  c.d_model = c.n_heads * c.d_head;
  c.d_mlp = 4 + rng.index(12);
  c.vocab_size = 6 + rng.index(20);
  c.max_seq_len = 8 + rng.index(9);
  c.scale_attention = rng.index(4) != 0;
  for (std::size_t l = 0; l < c.n_layers; ++l)
    c.attention_pattern.push_back(rng.index(2) == 0 ? AttentionSpan{} : AttentionSpan{1 + rng.index(c.max_seq_len)});
  c.validate();

  TensorArchive archive = zero_archive(c);
  for (const auto& [name, tensor] : archive.tensors()) {
    Tensor& t = archive.mutable_at(name);
    const bool ln_gain = name.ends_with("ln1.weight") || name.ends_with("ln2.weight") || name == "ln_f.weight";
    const bool bias = t.shape.size() == 1 && !ln_gain;
    for (float& v : t.data)
      v = static_cast<float>(ln_gain ? 1.0 + 0.2 * rng.normal() : (bias ? 0.1 : 0.6) * rng.normal());
  }
  return RandomModel{c, std::move(archive)};
}

// Random clean prompts with a corrupted contiguous span ending before the
// final position.
inline std::vector<PromptPair> random_pairs(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  Rng rng({seed, 0x9A1Bull});
  std::vector<PromptPair> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    PromptPair p;
    const std::size_t len = 3 + rng.index(c.max_seq_len - 2);
    for (std::size_t t = 0; t < len; ++t) p.clean.push_back(static_cast<TokenId>(rng.index(c.vocab_size)));
    p.corrupted = p.clean;
    p.span_begin = rng.index(len - 1);
    p.span_end = p.span_begin + 1 + rng.index(std::min<std::size_t>(2, len - 1 - p.span_begin));
    for (std::size_t t = p.span_begin; t < p.span_end; ++t)
      p.corrupted[t] = static_cast<TokenId>((p.clean[t] + 1 + rng.index(c.vocab_size - 1)) % c.vocab_size);
    p.correct_token = static_cast<TokenId>(rng.index(c.vocab_size));
    p.incorrect_token = static_cast<TokenId>((p.correct_token + 1 + rng.index(c.vocab_size - 1)) % c.vocab_size);
    p.eval_position = len - 1;
    p.category = kAllCategories[i % kAllCategories.size()];
    p.id = "random-" + std::to_string(i);
    p.validate();
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace mecheval::oracle
