#pragma once

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <nlohmann/json.hpp>
#include <regex>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"

namespace mecheval {

// Attention span for one layer. A window of 0 means global attention;
// otherwise position p sees keys j with p - window < j <= p.
struct AttentionSpan {
  std::size_t window = 0;

  bool is_global() const { return window == 0; }
  bool operator==(const AttentionSpan&) const = default;
};

struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  std::size_t d_head = 0;
  std::size_t vocab_size = 0;
  std::size_t max_seq_len = 0;
  double layernorm_epsilon = 1e-5;
  std::string positional_encoding = "learned-absolute";
  std::vector<AttentionSpan> attention_pattern;  // one entry per layer

  // Engine extensions. Both have defaults so minimal documents still load.
  std::size_t d_mlp = 0;          // 0 means 4 * d_model
  bool scale_attention = true;    // divide scores by sqrt(d_head)

  std::size_t mlp_width() const { return d_mlp == 0 ? 4 * d_model : d_mlp; }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      require(ok, ErrorKind::kConfig, "invalid model config: " + msg);
    };
    check(n_layers >= 1, "n_layers must be >= 1");
    check(vocab_size >= 2, "vocab_size must be >= 2");
    check(d_model >= 1 && n_heads >= 1 && d_head >= 1, "widths must be positive");
    check(d_model == n_heads * d_head, "d_model must equal n_heads * d_head");
    check(max_seq_len >= 1, "max_seq_len must be >= 1");
    check(layernorm_epsilon > 0.0, "layernorm_epsilon must be > 0");
    check(positional_encoding == "learned-absolute",
          "unsupported positional_encoding '" + positional_encoding + "'");
    check(attention_pattern.size() == n_layers,
          "attention_pattern must have one entry per layer");
  }

  // d_mlp == 0 and d_mlp == 4 * d_model describe the same model.
  bool operator==(const ModelConfig& o) const {
    return n_layers == o.n_layers && d_model == o.d_model && n_heads == o.n_heads && d_head == o.d_head &&
           vocab_size == o.vocab_size && max_seq_len == o.max_seq_len && layernorm_epsilon == o.layernorm_epsilon &&
           positional_encoding == o.positional_encoding && attention_pattern == o.attention_pattern &&
           mlp_width() == o.mlp_width() && scale_attention == o.scale_attention;
  }
};

inline std::string to_string(const AttentionSpan& span) {
  return span.is_global() ? std::string("global")
                          : "local(" + std::to_string(span.window) + ")";
}

inline AttentionSpan parse_attention_span(const std::string& text) {
  if (text == "global") return {};
  static const std::regex local_re(R"(local\((\d+)\))");
  std::smatch m;
  if (std::regex_match(text, m, local_re)) {
    const auto window = std::stoull(m[1].str());
    require(window > 0, ErrorKind::kConfig, "local attention window must be > 0");
    return AttentionSpan{static_cast<std::size_t>(window)};
  }
  fail(ErrorKind::kConfig, "unrecognized attention pattern entry '" + text + "'");
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  std::vector<std::string> pattern;
  for (const auto& span : c.attention_pattern) pattern.push_back(to_string(span));
  j = nlohmann::json{{"n_layers", c.n_layers},
                     {"d_model", c.d_model},
                     {"n_heads", c.n_heads},
                     {"d_head", c.d_head},
                     {"vocab_size", c.vocab_size},
                     {"max_seq_len", c.max_seq_len},
                     {"layernorm_epsilon", c.layernorm_epsilon},
                     {"positional_encoding", c.positional_encoding},
                     {"attention_pattern", pattern},
                     {"d_mlp", c.mlp_width()},
                     {"scale_attention", c.scale_attention}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  try {
    c.n_layers = j.at("n_layers").get<std::size_t>();
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.d_head = j.at("d_head").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.max_seq_len = j.at("max_seq_len").get<std::size_t>();
    c.layernorm_epsilon = j.at("layernorm_epsilon").get<double>();
    c.positional_encoding = j.value("positional_encoding", std::string("learned-absolute"));
    c.attention_pattern.clear();
    if (j.contains("attention_pattern")) {
      for (const auto& entry : j.at("attention_pattern"))
        c.attention_pattern.push_back(parse_attention_span(entry.get<std::string>()));
    } else {
      c.attention_pattern.assign(c.n_layers, AttentionSpan{});
    }
    c.d_mlp = j.value("d_mlp", std::size_t{0});
    c.scale_attention = j.value("scale_attention", true);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, std::string("malformed model config: ") + e.what());
  }
  c.validate();
}

inline ModelConfig load_model_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open model config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, "cannot parse " + path + ": " + e.what());
  }
  return j.get<ModelConfig>();
}

inline void save_model_config(const ModelConfig& config, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kConfig, "cannot write model config " + path);
  out << nlohmann::json(config).dump(2) << "\n";
}

}  // namespace mecheval
