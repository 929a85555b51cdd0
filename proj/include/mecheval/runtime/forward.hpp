#pragma once

// Full-sequence forward pass for pre-layernorm decoder-only transformers,
// with residual-stream hooks after every block. Hook L holds the residual
// stream at the output of block L; patches overwrite a hook value before
// block L + 1 (or the final layernorm) reads it.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/runtime/model.hpp"

namespace mecheval {

namespace diagnostics {

inline std::atomic<std::uint64_t>& forward_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

inline std::uint64_t forward_passes() { return forward_counter().load(); }

}  // namespace diagnostics

struct Logits {
  std::size_t seq_len = 0;
  std::size_t vocab_size = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t position) const {
    require(position < seq_len, ErrorKind::kPipeline,
            "logit position " + std::to_string(position) + " out of range");
    return std::span<const float>(values).subspan(position * vocab_size, vocab_size);
  }

  bool operator==(const Logits&) const = default;
};

struct ResidualCache {
  std::size_t n_layers = 0;
  std::size_t seq_len = 0;
  std::size_t d_model = 0;
  std::vector<float> values;  // [layer][position][channel]

  std::span<const float> at(std::size_t layer, std::size_t position) const {
    require(layer < n_layers && position < seq_len, ErrorKind::kPipeline,
            "residual cache coordinate out of range");
    return std::span<const float>(values).subspan((layer * seq_len + position) * d_model, d_model);
  }
};

// Attention probabilities, [layer][head][query][key]; keys outside the
// causal window carry 0.
struct AttentionCache {
  std::size_t n_layers = 0, n_heads = 0, seq_len = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t layer, std::size_t head, std::size_t query) const {
    const std::size_t off = ((layer * n_heads + head) * seq_len + query) * seq_len;
    return std::span<const float>(values).subspan(off, seq_len);
  }
};

struct Patch {
  std::size_t layer = 0;
  std::size_t position = 0;
  std::vector<float> value;
};

struct ForwardOptions {
  bool capture_residual = false;
  bool capture_attention = false;
};

struct ForwardResult {
  Logits logits;
  std::optional<ResidualCache> cache;
  std::optional<AttentionCache> attention;
};

namespace detail {

inline void layer_norm(std::span<const float> x, std::span<const float> gamma,
                       std::span<const float> beta, float eps, std::span<float> out) {
  const std::size_t n = x.size();
  float mean = 0.0f;
  for (float v : x) mean += v;
  mean /= static_cast<float>(n);
  float var = 0.0f;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= static_cast<float>(n);
  const float inv = 1.0f / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

// out[r] = bias + in[r] * W, for each of `rows` rows.
inline void linear(const std::vector<float>& in, std::size_t rows, std::size_t n_in,
                   const std::vector<float>& w, const std::vector<float>& bias,
                   std::size_t n_out, std::vector<float>& out) {
  out.assign(rows * n_out, 0.0f);
  for (std::size_t r = 0; r < rows; ++r) {
    float* o = out.data() + r * n_out;
    std::copy(bias.begin(), bias.end(), o);
    const float* x = in.data() + r * n_in;
    for (std::size_t i = 0; i < n_in; ++i) {
      const float xi = x[i];
      if (xi == 0.0f) continue;
      const float* wr = w.data() + i * n_out;
      for (std::size_t j = 0; j < n_out; ++j) o[j] += xi * wr[j];
    }
  }
}

inline float gelu(float x) {
  constexpr float kSqrt2OverPi = 0.7978845608028654f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

inline bool key_visible(const AttentionSpan& span, std::size_t query, std::size_t key) {
  if (key > query) return false;
  return span.is_global() || query - key < span.window;
}

}  // namespace detail

inline void validate_input(const Model& model, const TokenSequence& input) {
  const auto& c = model.config();
  require(!input.empty(), ErrorKind::kPipeline, "input sequence is empty");
  require(input.size() <= c.max_seq_len, ErrorKind::kPipeline,
          "sequence too long: " + std::to_string(input.size()) + " > max_seq_len " +
              std::to_string(c.max_seq_len));
  for (TokenId t : input)
    require(t >= 0 && static_cast<std::size_t>(t) < c.vocab_size, ErrorKind::kPipeline,
            "token id " + std::to_string(t) + " out of range");
}

inline ForwardResult run_forward(const Model& model, const TokenSequence& input,
                                 std::span<const Patch> patches, ForwardOptions options = {}) {
  validate_input(model, input);
  const ModelConfig& c = model.config();
  const ModelWeights& w = model.weights();
  const std::size_t n = input.size(), d = c.d_model, dh = c.d_head, m = c.mlp_width();
  const float eps = static_cast<float>(c.layernorm_epsilon);
  const float score_scale = c.scale_attention ? 1.0f / std::sqrt(static_cast<float>(dh)) : 1.0f;

  for (const Patch& p : patches) {
    require(p.layer < c.n_layers && p.position < n, ErrorKind::kPipeline,
            "patch coordinate (" + std::to_string(p.layer) + ", " + std::to_string(p.position) +
                ") out of range");
    require(p.value.size() == d, ErrorKind::kPipeline, "patch replacement has wrong width");
  }
  diagnostics::forward_counter().fetch_add(1, std::memory_order_relaxed);

  std::vector<float> x(n * d);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t i = 0; i < d; ++i)
      x[p * d + i] = w.wte[static_cast<std::size_t>(input[p]) * d + i] + w.wpe[p * d + i];

  ForwardResult result;
  if (options.capture_residual) result.cache = ResidualCache{c.n_layers, n, d, std::vector<float>(c.n_layers * n * d)};
  if (options.capture_attention)
    result.attention = AttentionCache{c.n_layers, c.n_heads, n, std::vector<float>(c.n_layers * c.n_heads * n * n, 0.0f)};

  std::vector<float> h(n * d), q, k, v, mixed(n * d), proj, hidden, mlp_out, scores(n);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const BlockWeights& b = w.blocks[l];
    const AttentionSpan& span = c.attention_pattern[l];

    for (std::size_t p = 0; p < n; ++p)
      detail::layer_norm(std::span<const float>(x).subspan(p * d, d), b.ln1_weight, b.ln1_bias, eps,
                         std::span<float>(h).subspan(p * d, d));
    detail::linear(h, n, d, b.w_q, b.b_q, d, q);
    detail::linear(h, n, d, b.w_k, b.b_k, d, k);
    detail::linear(h, n, d, b.w_v, b.b_v, d, v);

    std::fill(mixed.begin(), mixed.end(), 0.0f);
    for (std::size_t head = 0; head < c.n_heads; ++head) {
      const std::size_t off = head * dh;
      for (std::size_t p = 0; p < n; ++p) {
        float max_score = -INFINITY;
        for (std::size_t j = 0; j <= p; ++j) {
          if (!detail::key_visible(span, p, j)) continue;
          float s = 0.0f;
          for (std::size_t i = 0; i < dh; ++i) s += q[p * d + off + i] * k[j * d + off + i];
          scores[j] = s * score_scale;
          max_score = std::max(max_score, scores[j]);
        }
        float total = 0.0f;
        for (std::size_t j = 0; j <= p; ++j) {
          if (!detail::key_visible(span, p, j)) continue;
          scores[j] = std::exp(scores[j] - max_score);
          total += scores[j];
        }
        float* out = mixed.data() + p * d + off;
        for (std::size_t j = 0; j <= p; ++j) {
          if (!detail::key_visible(span, p, j)) continue;
          const float a = scores[j] / total;
          if (result.attention)
            result.attention->values[((l * c.n_heads + head) * n + p) * n + j] = a;
          if (a == 0.0f) continue;
          for (std::size_t i = 0; i < dh; ++i) out[i] += a * v[j * d + off + i];
        }
      }
    }
    detail::linear(mixed, n, d, b.w_o, b.b_o, d, proj);
    for (std::size_t i = 0; i < n * d; ++i) x[i] += proj[i];

    for (std::size_t p = 0; p < n; ++p)
      detail::layer_norm(std::span<const float>(x).subspan(p * d, d), b.ln2_weight, b.ln2_bias, eps,
                         std::span<float>(h).subspan(p * d, d));
    detail::linear(h, n, d, b.w_in, b.b_in, m, hidden);
    for (float& a : hidden) a = detail::gelu(a);
    detail::linear(hidden, n, m, b.w_out, b.b_out, d, mlp_out);
    for (std::size_t i = 0; i < n * d; ++i) x[i] += mlp_out[i];

    for (const Patch& patch : patches)
      if (patch.layer == l) std::copy(patch.value.begin(), patch.value.end(), x.begin() + patch.position * d);
    if (result.cache) std::copy(x.begin(), x.end(), result.cache->values.begin() + l * n * d);
  }

  for (std::size_t p = 0; p < n; ++p)
    detail::layer_norm(std::span<const float>(x).subspan(p * d, d), w.ln_f_weight, w.ln_f_bias, eps,
                       std::span<float>(h).subspan(p * d, d));
  result.logits.seq_len = n;
  result.logits.vocab_size = c.vocab_size;
  detail::linear(h, n, d, w.unembed_weight, w.unembed_bias, c.vocab_size, result.logits.values);
  return result;
}

inline ForwardResult forward(const Model& model, const TokenSequence& input, bool capture) {
  return run_forward(model, input, {}, ForwardOptions{capture, false});
}

inline Logits forward_patched(const Model& model, const TokenSequence& input,
                              std::span<const Patch> patches) {
  return run_forward(model, input, patches).logits;
}

}  // namespace mecheval
