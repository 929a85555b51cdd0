#pragma once

#include <span>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/core/parallel.hpp"
#include "mecheval/patching/profile.hpp"
#include "mecheval/patching/prompt_pair.hpp"
#include "mecheval/runtime/forward.hpp"

namespace mecheval {

enum class PatchSpanMode {
  kFullSpan,   // patch every position of the differing span
  kFirstToken, // patch only its first position
};

inline std::string_view to_string(PatchSpanMode mode) {
  return mode == PatchSpanMode::kFullSpan ? "span" : "first";
}

inline PatchSpanMode parse_patch_span_mode(std::string_view text) {
  if (text == "span") return PatchSpanMode::kFullSpan;
  if (text == "first") return PatchSpanMode::kFirstToken;
  fail(ErrorKind::kConfig, "patch span mode must be 'span' or 'first', got '" + std::string(text) + "'");
}

// l(x)[eval][correct] - l(x)[eval][incorrect].
inline double logit_diff(const Logits& logits, std::size_t eval_position, TokenId correct, TokenId incorrect) {
  const auto row = logits.row(eval_position);
  auto in_range = [&](TokenId t) { return t >= 0 && static_cast<std::size_t>(t) < logits.vocab_size; };
  require(in_range(correct) && in_range(incorrect), ErrorKind::kPipeline, "answer token id out of vocabulary range");
  return static_cast<double>(row[static_cast<std::size_t>(correct)]) -
         static_cast<double>(row[static_cast<std::size_t>(incorrect)]);
}

inline double logit_diff(const Logits& logits, const PromptPair& pair) {
  return logit_diff(logits, pair.eval_position, pair.correct_token, pair.incorrect_token);
}

struct SensitivityGap {
  double clean_diff = 0.0;
  double corr_diff = 0.0;
  double gap = 0.0;
};

inline SensitivityGap sensitivity_gap(const Model& model, const PromptPair& pair) {
  const double clean = logit_diff(forward(model, pair.clean, false).logits, pair);
  const double corr = logit_diff(forward(model, pair.corrupted, false).logits, pair);
  return {clean, corr, clean - corr};
}

inline std::vector<std::size_t> patch_positions(const PromptPair& pair, PatchSpanMode mode) {
  std::vector<std::size_t> positions;
  if (pair.span_begin == pair.span_end) return positions;
  const std::size_t end = mode == PatchSpanMode::kFullSpan ? pair.span_end : pair.span_begin + 1;
  for (std::size_t p = pair.span_begin; p < end; ++p) positions.push_back(p);
  return positions;
}

// For each layer L: re-run the corrupted prompt with the residual at (L, p)
// replaced by `source` for every patched position p, and record
// patched_diff - corr_diff.
inline std::vector<double> layer_sweep(const Model& model, const PromptPair& pair, const ResidualCache& source,
                                       double corr_diff, PatchSpanMode mode = PatchSpanMode::kFullSpan) {
  const auto& c = model.config();
  require(source.n_layers == c.n_layers && source.seq_len == pair.corrupted.size() && source.d_model == c.d_model,
          ErrorKind::kPipeline, "cache shape does not match the corrupted sequence");
  const auto positions = patch_positions(pair, mode);
  std::vector<double> shifts(c.n_layers, 0.0);
  for (std::size_t layer = 0; layer < c.n_layers; ++layer) {
    std::vector<Patch> patches;
    for (std::size_t p : positions) {
      const auto v = source.at(layer, p);
      patches.push_back(Patch{layer, p, std::vector<float>(v.begin(), v.end())});
    }
    const Logits patched = forward_patched(model, pair.corrupted, patches);
    shifts[layer] = logit_diff(patched, pair) - corr_diff;
  }
  return shifts;
}

inline std::vector<double> layer_sweep(const Model& model, const PromptPair& pair, const ResidualCache& clean_cache,
                                       PatchSpanMode mode = PatchSpanMode::kFullSpan) {
  const double corr = logit_diff(forward(model, pair.corrupted, false).logits, pair);
  return layer_sweep(model, pair, clean_cache, corr, mode);
}

struct ProfileOptions {
  PatchSpanMode span_mode = PatchSpanMode::kFullSpan;
  double top_layer_fraction = kDefaultTopLayerFraction;
  std::size_t workers = 1;
};

inline PatchProfile profile_pair(const Model& model, const PromptPair& pair, const ProfileOptions& options = {}) {
  pair.validate();
  const ForwardResult clean = forward(model, pair.clean, true);
  const double clean_diff = logit_diff(clean.logits, pair);
  const double corr_diff = logit_diff(forward(model, pair.corrupted, false).logits, pair);
  auto shifts = layer_sweep(model, pair, *clean.cache, corr_diff, options.span_mode);
  PatchProfile profile = build_profile(clean_diff, corr_diff, std::move(shifts), options.top_layer_fraction);
  profile.id = pair.id;
  profile.category = pair.category;
  return profile;
}

inline std::vector<PatchProfile> profile_pairs(const Model& model, std::span<const PromptPair> pairs,
                                               const ProfileOptions& options = {}) {
  std::vector<PatchProfile> out(pairs.size());
  parallel_for(pairs.size(), options.workers, [&](std::size_t i) { out[i] = profile_pair(model, pairs[i], options); });
  return out;
}

}  // namespace mecheval
