#pragma once

// Hand-constructed models with a known answer.
//
// Both models carry two saturated "mover" heads in block planted_layer + 1;
// every other block is all-zero. At the query position the column head
// copies one token's code into the residual stream and the unembedding
// reads it back out, so the next-token argmax is known in closed form.
//
//   planted: keys are relative positions into the schema (column at
//            SELECT - 4, table at FROM - 8 in the prompt layout), so the
//            answer depends on the schema tokens and nothing else.
//   bypass:  keys are absolute instruction positions, so the schema is
//            never read and patching it moves nothing.
//
// Residual channels, in order:
//   [0, m)   token code (balanced Hadamard rows and their negations)
//   flags    isSELECT, isFROM, isResponse, isColumnish, isTable
//   const    zero in the residual; LayerNorm bias turns it into 1
//   2 token balance, 4 rotary position, sink, 2 position balance
// Token and position parts are each zero-mean with constant norm, so every
// LayerNorm input has the same scale and the construction is exact.

#include <bit>
#include <cmath>
#include <filesystem>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/corruption/corpus.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/corruption/prompt.hpp"
#include "mecheval/runtime/model.hpp"
#include "mecheval/runtime/model_dir.hpp"
#include "mecheval/runtime/tokenizer.hpp"

namespace mecheval::oracle {

struct PlantedSpec {
  std::size_t n_layers = 4;
  std::size_t d_model = 32;
  std::size_t planted_layer = 2;  // mover heads read hook planted_layer
  std::size_t max_seq_len = 64;
  double margin = 1000.0;         // nats between the attended key and any other
  double answer_logit = 4.0;      // logit of the copied answer at the query
};

enum class MoverKeys { kSchemaRelative, kInstructionAbsolute };

// Token positions of the slots the movers read, derived from the template.
struct PromptLayout {
  std::size_t column_offset = 0;       // SELECT position - schema column position
  std::size_t table_offset = 0;        // FROM position - schema table position
  std::size_t instruction_column = 0;  // absolute position of the column synonym
  std::size_t instruction_table = 0;   // absolute position of the table synonym
};

inline PromptLayout prompt_layout() {
  const SqlExample ex{"VERB ICOL from ITAB", create_statement("TAB", "COL"), ""};
  const auto toks = FixtureTokenizer::split(render_prompt_prefix(ex, true) + " SELECT COL FROM");
  auto pos = [&](const std::string& word, std::size_t nth) {
    std::size_t seen = 0;
    for (std::size_t i = 0; i < toks.size(); ++i)
      if (toks[i] == word && seen++ == nth) return i;
    fail(ErrorKind::kPipeline, "prompt template lacks '" + word + "'");
  };
  return PromptLayout{pos("SELECT", 0) - pos("COL", 0), pos("FROM", 0) - pos("TAB", 0), pos("ICOL", 0),
                      pos("ITAB", 0)};
}

// Maps each instruction synonym to the schema word it stands for, as
// memorised from a corpus. Fails on ambiguous or off-template instructions.
inline std::map<std::string, std::string> instruction_answer_map(const std::vector<SqlExample>& corpus) {
  std::map<std::string, std::string> answers;
  auto bind = [&](const std::string& key, const std::string& value) {
    auto [it, inserted] = answers.emplace(key, value);
    require(inserted || it->second == value, ErrorKind::kInput,
            "instruction word '" + key + "' maps to both '" + it->second + "' and '" + value + "'");
  };
  for (const auto& ex : corpus) {
    const auto words = FixtureTokenizer::split(ex.english_prompt);
    const auto gold = parse_select(ex.sql_statement);
    require(words.size() == 4 && words[2] == "from" && gold.has_value(), ErrorKind::kInput,
            "example off the '<verb> <column> from <table>' template: '" + ex.english_prompt + "'");
    bind(words[1], gold->second);
    bind(words[3], gold->first);
  }
  return answers;
}

struct PlantedModel {
  ModelConfig config;
  TensorArchive archive;
  FixtureTokenizer vocab;

  Model model() const { return Model::load(archive, config); }
  void save(const std::filesystem::path& dir) const { save_model_dir(dir, archive, config, vocab); }
};

namespace detail {

inline std::size_t floor_pow2(std::size_t n) { return n == 0 ? 0 : std::bit_floor(n); }

// Sylvester-Hadamard row, normalised to unit length.
inline std::vector<double> hadamard_code(std::size_t m, std::size_t index) {
  const std::size_t row = 1 + index / 2;
  const double sign = index % 2 == 0 ? 1.0 : -1.0;
  std::vector<double> code(m);
  for (std::size_t j = 0; j < m; ++j)
    code[j] = sign * (std::popcount(row & j) % 2 == 0 ? 1.0 : -1.0) / std::sqrt(static_cast<double>(m));
  return code;
}

// Fills the two balance channels so the vector sums to zero with squared norm r2.
inline void balance(std::vector<double>& x, std::size_t b1, std::size_t b2, double r2) {
  double sum = 0.0, sq = 0.0;
  for (double v : x) {
    sum += v;
    sq += v * v;
  }
  const double disc = 2.0 * (r2 - sq) - sum * sum;
  require(disc >= 0.0, ErrorKind::kPipeline, "balance channels cannot reach the target norm");
  x[b1] = (-sum + std::sqrt(disc)) / 2.0;
  x[b2] = (-sum - std::sqrt(disc)) / 2.0;
}

inline double norm_budget(const std::vector<std::vector<double>>& rows) {
  double budget = 0.0;
  for (const auto& x : rows) {
    double sum = 0.0, sq = 0.0;
    for (double v : x) {
      sum += v;
      sq += v * v;
    }
    budget = std::max(budget, sq + sum * sum / 2.0);
  }
  return budget + 1.0;
}

}  // namespace detail

inline PlantedModel build_mover_model(const WordPools& pools, const PlantedSpec& spec, MoverKeys keys,
                                      const std::map<std::string, std::string>& answer_map) {
  const std::size_t d = spec.d_model;
  require(spec.planted_layer + 1 < spec.n_layers, ErrorKind::kConfig,
          "planted_layer must leave a block after it (planted_layer <= n_layers - 2)");
  require(d % 2 == 0, ErrorKind::kConfig, "planted d_model must be even");
  constexpr std::size_t kReserved = 15;
  require(d >= kReserved + 4, ErrorKind::kConfig, "planted d_model too small");
  const std::size_t d_head = d / 2;
  const std::size_t m = std::min(detail::floor_pow2(d - kReserved), detail::floor_pow2(d_head));

  // Channel indices.
  const std::size_t f_select = m, f_from = m + 1, f_response = m + 2, f_columnish = m + 3, f_table = m + 4;
  const std::size_t c_const = m + 5, tb1 = m + 6, tb2 = m + 7;
  const std::size_t p_cos = m + 8, p_sin = m + 9, p_ncos = m + 10, p_nsin = m + 11, p_sink = m + 12;
  const std::size_t pb1 = m + 13, pb2 = m + 14;

  FixtureTokenizer vocab = fixture_vocabulary(pools);
  const std::size_t V = vocab.vocab_size();

  std::set<std::string> columnish, tables;
  for (const SynonymMap* pool : {&pools.db_columns, &pools.non_db_words})
    for (const auto& [w, syns] : *pool) {
      columnish.insert(w);
      columnish.insert(syns.begin(), syns.end());
    }
  for (const auto& [w, syns] : pools.table_names) {
    tables.insert(w);
    tables.insert(syns.begin(), syns.end());
  }
  std::vector<std::string> content;
  for (const auto& w : vocab.tokens())
    if (columnish.count(w) || tables.count(w)) content.push_back(w);
  require(content.size() <= 2 * (m - 1), ErrorKind::kConfig,
          "vocab too large for orthogonal embedding at given d_model: " + std::to_string(content.size()) +
              " content words, capacity " + std::to_string(2 * (m - 1)));

  std::map<std::string, std::vector<double>> code;
  for (std::size_t i = 0; i < content.size(); ++i) code[content[i]] = detail::hadamard_code(m, i);
  for (const auto& [a, ca] : code)
    for (const auto& [b, cb] : code) {
      if (a == b) continue;
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += ca[j] * cb[j];
      require(dot <= 1e-12, ErrorKind::kPipeline, "code overlap bound violated for '" + a + "', '" + b + "'");
    }

  // Unembedding reads the code of the word that maps onto each answer.
  std::map<std::string, std::string> reader;
  for (const auto& w : content) reader[w] = w;
  for (const auto& [key, value] : answer_map) {
    require(code.count(key) && code.count(value), ErrorKind::kInput,
            "answer map entry '" + key + "' -> '" + value + "' is outside the content vocabulary");
    reader.erase(key);
  }
  std::set<std::string> answered;
  for (const auto& [key, value] : answer_map) {
    require(answered.insert(value).second, ErrorKind::kInput, "answer map is not injective at '" + value + "'");
    reader[value] = key;
  }

  std::vector<std::vector<double>> tok(V, std::vector<double>(d, 0.0));
  for (std::size_t t = 0; t < V; ++t) {
    const auto& w = vocab.tokens()[t];
    if (auto it = code.find(w); it != code.end())
      for (std::size_t j = 0; j < m; ++j) tok[t][j] = it->second[j];
    tok[t][f_select] = w == "SELECT";
    tok[t][f_from] = w == "FROM";
    tok[t][f_response] = w == "###Response:";
    tok[t][f_columnish] = columnish.count(w) != 0;
    tok[t][f_table] = tables.count(w) != 0;
  }
  const double r_tok2 = detail::norm_budget(tok);
  for (auto& x : tok) detail::balance(x, tb1, tb2, r_tok2);

  const double theta = std::numbers::pi / static_cast<double>(spec.max_seq_len);
  std::vector<std::vector<double>> pos(spec.max_seq_len, std::vector<double>(d, 0.0));
  for (std::size_t p = 0; p < spec.max_seq_len; ++p) {
    pos[p][p_cos] = std::cos(theta * static_cast<double>(p));
    pos[p][p_sin] = std::sin(theta * static_cast<double>(p));
    pos[p][p_ncos] = -pos[p][p_cos];
    pos[p][p_nsin] = -pos[p][p_sin];
    pos[p][p_sink] = p == 0 ? 1.0 : 0.0;
  }
  const double r_pos2 = detail::norm_budget(pos);
  for (auto& x : pos) detail::balance(x, pb1, pb2, r_pos2);

  ModelConfig config;
  config.n_layers = spec.n_layers;
  config.d_model = d;
  config.n_heads = 2;
  config.d_head = d_head;
  config.vocab_size = V;
  config.max_seq_len = spec.max_seq_len;
  config.attention_pattern.assign(spec.n_layers, AttentionSpan{});
  config.validate();

  const double eps = config.layernorm_epsilon;
  const double dd = static_cast<double>(d);
  const double lambda = 1.0 / std::sqrt((r_tok2 + r_pos2) / dd + eps);
  const double lambda_f = 1.0 / std::sqrt((r_tok2 + r_pos2 + 1.0) / dd + eps);
  const double root_dh = std::sqrt(static_cast<double>(d_head));
  const double amp = spec.margin / (1.0 - std::cos(theta));
  const double sink = 2.0 * amp + spec.margin;

  TensorArchive archive = zero_archive(config);
  auto set = [&](const std::string& name, std::size_t row, std::size_t col, double v) {
    Tensor& t = archive.mutable_at(name);
    t.data[row * t.shape[1] + col] = static_cast<float>(v);
  };
  auto fill = [&](const std::string& name, double v) {
    for (float& x : archive.mutable_at(name).data) x = static_cast<float>(v);
  };
  for (std::size_t t = 0; t < V; ++t)
    for (std::size_t j = 0; j < d; ++j) set("wte", t, j, tok[t][j]);
  for (std::size_t p = 0; p < spec.max_seq_len; ++p)
    for (std::size_t j = 0; j < d; ++j) set("wpe", p, j, pos[p][j]);
  for (std::size_t l = 0; l < spec.n_layers; ++l) {
    fill(block_tensor(l, "ln1.weight"), 1.0);
    fill(block_tensor(l, "ln2.weight"), 1.0);
    archive.mutable_at(block_tensor(l, "ln1.bias")).data[c_const] = 1.0f;
  }
  fill("ln_f.weight", 1.0);

  const std::size_t block = spec.planted_layer + 1;
  const auto wq = block_tensor(block, "attn.w_q"), wk = block_tensor(block, "attn.w_k");
  const auto wv = block_tensor(block, "attn.w_v"), wo = block_tensor(block, "attn.w_o");
  const PromptLayout layout = prompt_layout();
  struct Mover {
    std::size_t gate;
    std::size_t relative_offset;
    std::size_t absolute_target;
  };
  const Mover movers[2] = {{f_select, layout.column_offset, layout.instruction_column},
                           {f_from, layout.table_offset, layout.instruction_table}};
  for (std::size_t h = 0; h < 2; ++h) {
    const std::size_t base = h * d_head;
    set(wk, p_cos, base + 0, 1.0);
    set(wk, p_sin, base + 1, 1.0);
    set(wk, p_sink, base + 2, 1.0);
    if (keys == MoverKeys::kSchemaRelative) {
      const double c = amp * root_dh / (lambda * lambda);
      const double o = theta * static_cast<double>(movers[h].relative_offset);
      set(wq, p_cos, base + 0, c * std::cos(o));
      set(wq, p_sin, base + 0, c * std::sin(o));
      set(wq, p_cos, base + 1, -c * std::sin(o));
      set(wq, p_sin, base + 1, c * std::cos(o));
    } else {
      const double c = amp * root_dh / (lambda * lambda);
      const double t = theta * static_cast<double>(movers[h].absolute_target);
      set(wq, movers[h].gate, base + 0, c * std::cos(t));
      set(wq, movers[h].gate, base + 1, c * std::sin(t));
    }
    // Ungated queries land on the zero-valued sink at position 0.
    const double g = sink * root_dh / lambda;
    set(wq, c_const, base + 2, g);
    set(wq, movers[h].gate, base + 2, -2.0 * g / lambda);
    for (std::size_t j = 0; j < m; ++j) {
      set(wv, j, base + j, 1.0);
      set(wo, base + j, j, 1.0 / lambda);
    }
  }

  const double s_code = spec.answer_logit / lambda_f;
  const double s_flag = 2.0 * s_code;
  for (const auto& [answer, source] : reader) {
    const auto id = static_cast<std::size_t>(vocab.id(answer));
    for (std::size_t j = 0; j < m; ++j) set("unembed.weight", j, id, s_code * code.at(source)[j]);
  }
  set("unembed.weight", f_response, static_cast<std::size_t>(vocab.id("SELECT")), s_flag);
  set("unembed.weight", f_columnish, static_cast<std::size_t>(vocab.id("FROM")), s_flag);
  set("unembed.weight", f_table, static_cast<std::size_t>(vocab.id(std::string(FixtureTokenizer::kEndOfText))),
      s_flag);

  archive.metadata()["format"] = "pt";
  return PlantedModel{config, std::move(archive), std::move(vocab)};
}

// Mover keyed on the schema: answers copy the CREATE TABLE column and table.
inline PlantedModel build_planted_model(const WordPools& pools, const PlantedSpec& spec = {}) {
  return build_mover_model(pools, spec, MoverKeys::kSchemaRelative, {});
}

// Mover keyed on the instruction: answers come from the memorised
// synonym -> schema-word map and never depend on the schema.
inline PlantedModel build_bypass_model(const WordPools& pools, const std::vector<SqlExample>& corpus,
                                       const PlantedSpec& spec = {}) {
  return build_mover_model(pools, spec, MoverKeys::kInstructionAbsolute, instruction_answer_map(corpus));
}

}  // namespace mecheval::oracle
