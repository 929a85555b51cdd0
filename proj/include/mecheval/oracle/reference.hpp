#pragma once

// Straightforward double-precision re-implementation of the transformer and
// of the patching/rule math. It reads weights straight from the archive by
// name and shares no code with the engine's forward pass, profile builder
// or verifier; the differential tests compare the two.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mecheval/patching/prompt_pair.hpp"
#include "mecheval/runtime/config.hpp"
#include "mecheval/runtime/model.hpp"
#include "mecheval/runtime/tensor_archive.hpp"

namespace mecheval::oracle {

using Matrix = std::vector<std::vector<double>>;  // row-major [rows][cols]

inline Matrix to_matrix(const Tensor& t) {
  const std::size_t rows = t.shape.size() == 2 ? t.shape[0] : 1;
  const std::size_t cols = t.shape.size() == 2 ? t.shape[1] : t.shape[0];
  Matrix m(rows, std::vector<double>(cols));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m[r][c] = t.data[r * cols + c];
  return m;
}

inline std::vector<double> to_vector(const Tensor& t) { return std::vector<double>(t.data.begin(), t.data.end()); }

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < b.size(); ++k) s += a[i][k] * b[k][j];
      out[i][j] = s;
    }
  return out;
}

inline void add_row_bias(Matrix& m, const std::vector<double>& bias) {
  for (auto& row : m)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias[j];
}

inline Matrix layer_norm_rows(const Matrix& x, const std::vector<double>& g, const std::vector<double>& b, double eps) {
  Matrix out = x;
  for (auto& row : out) {
    const double n = static_cast<double>(row.size());
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= n;
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= n;
    const double s = std::sqrt(var + eps);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mu) / s * g[j] + b[j];
  }
  return out;
}

struct ReferencePatch {
  std::size_t layer;
  std::size_t position;
  std::vector<double> value;
};

struct ReferenceRun {
  Matrix logits;                    // [position][vocab]
  std::vector<Matrix> hooks;        // [layer][position][channel]
};

inline ReferenceRun reference_forward(const TensorArchive& w, const ModelConfig& c, const TokenSequence& tokens,
                                      const std::vector<ReferencePatch>& patches = {}) {
  const std::size_t n = tokens.size();
  const Matrix wte = to_matrix(w.at("wte"));
  const Matrix wpe = to_matrix(w.at("wpe"));
  Matrix x(n);
  for (std::size_t p = 0; p < n; ++p) {
    x[p] = wte[static_cast<std::size_t>(tokens[p])];
    for (std::size_t i = 0; i < x[p].size(); ++i) x[p][i] += wpe[p][i];
  }

  ReferenceRun run;
  const double scale = c.scale_attention ? 1.0 / std::sqrt(static_cast<double>(c.d_head)) : 1.0;
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto T = [&](const std::string& leaf) { return w.at("blocks." + std::to_string(l) + "." + leaf); };
    const Matrix h = layer_norm_rows(x, to_vector(T("ln1.weight")), to_vector(T("ln1.bias")), c.layernorm_epsilon);
    Matrix q = matmul(h, to_matrix(T("attn.w_q")));
    add_row_bias(q, to_vector(T("attn.b_q")));
    Matrix k = matmul(h, to_matrix(T("attn.w_k")));
    add_row_bias(k, to_vector(T("attn.b_k")));
    Matrix v = matmul(h, to_matrix(T("attn.w_v")));
    add_row_bias(v, to_vector(T("attn.b_v")));

    Matrix z(n, std::vector<double>(c.d_model, 0.0));
    for (std::size_t head = 0; head < c.n_heads; ++head) {
      const std::size_t base = head * c.d_head;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> scores;
        std::vector<std::size_t> keys;
        for (std::size_t j = 0; j <= i; ++j) {
          const auto& span = c.attention_pattern[l];
          if (!span.is_global() && i - j >= span.window) continue;
          double s = 0.0;
          for (std::size_t e = 0; e < c.d_head; ++e) s += q[i][base + e] * k[j][base + e];
          scores.push_back(s * scale);
          keys.push_back(j);
        }
        double mx = scores[0];
        for (double s : scores) mx = std::max(mx, s);
        double denom = 0.0;
        for (double& s : scores) denom += (s = std::exp(s - mx));
        for (std::size_t t = 0; t < keys.size(); ++t)
          for (std::size_t e = 0; e < c.d_head; ++e) z[i][base + e] += scores[t] / denom * v[keys[t]][base + e];
      }
    }
    Matrix attn = matmul(z, to_matrix(T("attn.w_o")));
    add_row_bias(attn, to_vector(T("attn.b_o")));
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t i = 0; i < c.d_model; ++i) x[p][i] += attn[p][i];

    const Matrix h2 = layer_norm_rows(x, to_vector(T("ln2.weight")), to_vector(T("ln2.bias")), c.layernorm_epsilon);
    Matrix hidden = matmul(h2, to_matrix(T("mlp.w_in")));
    add_row_bias(hidden, to_vector(T("mlp.b_in")));
    for (auto& row : hidden)
      for (double& a : row)
        a = 0.5 * a * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (a + 0.044715 * a * a * a)));
    Matrix mlp = matmul(hidden, to_matrix(T("mlp.w_out")));
    add_row_bias(mlp, to_vector(T("mlp.b_out")));
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t i = 0; i < c.d_model; ++i) x[p][i] += mlp[p][i];

    for (const auto& patch : patches)
      if (patch.layer == l) x[patch.position] = patch.value;
    run.hooks.push_back(x);
  }
  const Matrix hf = layer_norm_rows(x, to_vector(w.at("ln_f.weight")), to_vector(w.at("ln_f.bias")), c.layernorm_epsilon);
  run.logits = matmul(hf, to_matrix(w.at("unembed.weight")));
  add_row_bias(run.logits, to_vector(w.at("unembed.bias")));
  return run;
}

// Per-example record re-derived by enumeration over layers.
struct OracleProfile {
  double clean_diff = 0.0, corr_diff = 0.0, gap = 0.0;
  std::vector<double> shifts;
  double best_recovery = 0.0;
  std::size_t best_layer = 0;
  double rec_frac = 0.0;
  std::vector<std::size_t> top_layers;
  double logit_scale = 0.0;  // max |logit| at the eval position over every run
};

struct OracleVerdict {
  bool r1 = false, r2 = false, r3 = false;
};

struct OracleThresholds {
  double tau_gap = 0.4;
  double alpha = 0.9;
  double top_layer_fraction = 0.9;
};

struct OracleResult {
  OracleThresholds thresholds;
  std::vector<OracleProfile> profiles;
  std::vector<OracleVerdict> verdicts;
  std::optional<std::size_t> modal_layer;
};

inline double reference_logit_diff(const Matrix& logits, const PromptPair& pair) {
  const auto& row = logits[pair.eval_position];
  return row[static_cast<std::size_t>(pair.correct_token)] - row[static_cast<std::size_t>(pair.incorrect_token)];
}

// Recomputes every profile field and every R1/R2/R3 verdict from scratch.
// first_token_only mirrors the engine's first-token patch mode.
inline OracleResult brute_force_pipeline(const TensorArchive& w, const ModelConfig& c,
                                         const std::vector<PromptPair>& pairs, const OracleThresholds& t,
                                         bool first_token_only = false) {
  OracleResult result;
  result.thresholds = t;
  auto scale_of = [](const Matrix& logits, std::size_t pos) {
    double m = 0.0;
    for (double v : logits[pos]) m = std::max(m, std::fabs(v));
    return m;
  };
  for (const auto& pair : pairs) {
    OracleProfile prof;
    const ReferenceRun clean = reference_forward(w, c, pair.clean);
    const ReferenceRun corr = reference_forward(w, c, pair.corrupted);
    prof.clean_diff = reference_logit_diff(clean.logits, pair);
    prof.corr_diff = reference_logit_diff(corr.logits, pair);
    prof.gap = prof.clean_diff - prof.corr_diff;
    prof.logit_scale = std::max(scale_of(clean.logits, pair.eval_position), scale_of(corr.logits, pair.eval_position));
    const double direction = prof.gap > 0 ? 1.0 : (prof.gap < 0 ? -1.0 : 0.0);
    const std::size_t last = first_token_only ? std::min(pair.span_end, pair.span_begin + 1) : pair.span_end;

    std::vector<double> recovered;
    for (std::size_t l = 0; l < c.n_layers; ++l) {
      std::vector<ReferencePatch> patches;
      for (std::size_t p = pair.span_begin; p < last; ++p) patches.push_back({l, p, clean.hooks[l][p]});
      const ReferenceRun patched = reference_forward(w, c, pair.corrupted, patches);
      prof.shifts.push_back(reference_logit_diff(patched.logits, pair) - prof.corr_diff);
      prof.logit_scale = std::max(prof.logit_scale, scale_of(patched.logits, pair.eval_position));
      recovered.push_back(std::max(0.0, direction * prof.shifts.back()));
    }
    // Enumerate: the best layer is the first index holding the maximum.
    prof.best_recovery = 0.0;
    for (double r : recovered) prof.best_recovery = std::max(prof.best_recovery, r);
    for (std::size_t l = 0; l < recovered.size(); ++l)
      if (recovered[l] == prof.best_recovery) {
        prof.best_layer = l;
        break;
      }
    const double mag = std::fabs(prof.gap);
    prof.rec_frac = mag == 0.0 ? 0.0 : std::min(prof.best_recovery, mag) / mag;
    if (mag != 0.0)
      for (std::size_t l = 0; l < recovered.size(); ++l)
        if (recovered[l] >= t.top_layer_fraction * mag) prof.top_layers.push_back(l);
    result.profiles.push_back(prof);
  }

  std::vector<std::size_t> votes(c.n_layers, 0);
  for (const auto& prof : result.profiles) {
    OracleVerdict v;
    v.r1 = prof.gap != 0.0 && std::fabs(prof.gap) >= t.tau_gap;
    v.r2 = v.r1 && prof.rec_frac >= t.alpha;
    if (v.r2) ++votes[prof.best_layer];
    result.verdicts.push_back(v);
  }
  std::size_t top_votes = 0;
  for (std::size_t l = 0; l < votes.size(); ++l)
    if (votes[l] > top_votes) {
      top_votes = votes[l];
      result.modal_layer = l;
    }
  for (std::size_t i = 0; i < result.profiles.size(); ++i) {
    auto& v = result.verdicts[i];
    if (!v.r2 || !result.modal_layer) continue;
    const auto& tl = result.profiles[i].top_layers;
    v.r3 = std::find(tl.begin(), tl.end(), *result.modal_layer) != tl.end();
  }
  return result;
}

}  // namespace mecheval::oracle
