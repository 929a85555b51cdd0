#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <nlohmann/json.hpp>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mecheval/baseline/metrics.hpp"
#include "mecheval/core/error.hpp"
#include "mecheval/core/parallel.hpp"
#include "mecheval/corruption/prompt.hpp"
#include "mecheval/runtime/forward.hpp"
#include "mecheval/runtime/tokenizer.hpp"

namespace mecheval {

inline constexpr std::size_t kDefaultMaxNewTokens = 24;

// Argmax decoding after the prompt. Stops at end-of-text, at a token
// containing a newline, at max_new_tokens, or when the context is full.
inline std::string greedy_decode(const Model& model, const Tokenizer& tokenizer, const std::string& prompt,
                                 std::size_t max_new_tokens = kDefaultMaxNewTokens) {
  TokenSequence tokens = tokenizer.encode(prompt);
  require(!tokens.empty(), ErrorKind::kPipeline, "empty decoding prompt");
  require(tokens.size() <= model.config().max_seq_len, ErrorKind::kPipeline,
          "context overflow: prompt has " + std::to_string(tokens.size()) + " tokens, max_seq_len is " +
              std::to_string(model.config().max_seq_len));
  const auto eos = tokenizer.end_of_text();
  TokenSequence generated;
  while (generated.size() < max_new_tokens && tokens.size() < model.config().max_seq_len) {
    const Logits logits = forward(model, tokens, false).logits;
    const auto row = logits.row(tokens.size() - 1);
    const std::size_t limit = std::min(row.size(), tokenizer.vocab_size());
    const auto next = static_cast<TokenId>(std::max_element(row.begin(), row.begin() + limit) - row.begin());
    if (eos && next == *eos) break;
    if (tokenizer.token_text(next).find('\n') != std::string::npos) break;
    generated.push_back(next);
    tokens.push_back(next);
  }
  return normalize_whitespace(tokenizer.decode(generated));
}

struct AccuracyReport {
  double exact_match = 0.0;
  double field_accuracy = 0.0;
  std::size_t n_examples = 0;
  bool train_schema = false;
  bool eval_schema = false;

  bool operator==(const AccuracyReport&) const = default;
};

struct ScoredPrediction {
  std::string prediction;
  bool exact = false;
  FieldScore fields;
};

inline AccuracyReport score_predictions(std::span<const std::string> predictions, std::span<const SqlExample> gold) {
  require(predictions.size() == gold.size(), ErrorKind::kPipeline, "prediction and gold counts differ");
  AccuracyReport r;
  r.n_examples = gold.size();
  if (gold.empty()) return r;
  FieldScore total;
  std::size_t exact = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    exact += exact_match(predictions[i], gold[i].sql_statement);
    total += field_score(predictions[i], gold[i].sql_statement);
  }
  r.exact_match = static_cast<double>(exact) / static_cast<double>(gold.size());
  r.field_accuracy = total.ratio();
  return r;
}

inline AccuracyReport evaluate_accuracy(const Model& model, const Tokenizer& tokenizer,
                                        std::span<const SqlExample> test_set, bool train_schema, bool eval_schema,
                                        std::size_t workers = 1, std::vector<std::string>* predictions_out = nullptr) {
  std::vector<std::string> predictions(test_set.size());
  parallel_for(test_set.size(), workers, [&](std::size_t i) {
    predictions[i] = greedy_decode(model, tokenizer, render_prompt_prefix(test_set[i], eval_schema));
  });
  AccuracyReport r = score_predictions(predictions, test_set);
  r.train_schema = train_schema;
  r.eval_schema = eval_schema;
  if (predictions_out) *predictions_out = std::move(predictions);
  return r;
}

struct BaselineModel {
  bool train_schema = false;
  const Model* model = nullptr;
  const Tokenizer* tokenizer = nullptr;
};

// One report per (model, eval-schema flag), ordered train-schema false
// before true, then eval flag false before true.
inline std::vector<AccuracyReport> run_matrix(std::vector<BaselineModel> models, std::span<const SqlExample> test_set,
                                              std::vector<bool> eval_schema_flags = {false, true},
                                              std::size_t workers = 1) {
  std::stable_sort(models.begin(), models.end(),
                   [](const BaselineModel& a, const BaselineModel& b) { return a.train_schema < b.train_schema; });
  std::sort(eval_schema_flags.begin(), eval_schema_flags.end());
  std::vector<AccuracyReport> out;
  for (const auto& m : models)
    for (bool flag : eval_schema_flags)
      out.push_back(evaluate_accuracy(*m.model, *m.tokenizer, test_set, m.train_schema, flag, workers));
  return out;
}

inline std::string format_percent(double rate, int decimals) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, rate * 100.0);
  return buf;
}

inline std::string accuracy_markdown(std::span<const AccuracyReport> rows) {
  std::ostringstream md;
  md << "| Train Schema | Eval Schema | Exact Match | Field Acc |\n";
  md << "|:---:|:---:|:---:|:---:|\n";
  for (const auto& r : rows)
    md << "| " << (r.train_schema ? "✓" : "✗") << " | " << (r.eval_schema ? "✓" : "✗") << " | "
       << format_percent(r.exact_match, 1) << " | " << format_percent(r.field_accuracy, 1) << " |\n";
  return md.str();
}

inline std::string accuracy_csv(std::span<const AccuracyReport> rows) {
  std::ostringstream csv;
  csv << "train_schema,eval_schema,exact_match,field_accuracy,n_examples\n";
  for (const auto& r : rows) {
    const auto exact = nlohmann::json(r.exact_match).dump();
    const auto field = nlohmann::json(r.field_accuracy).dump();
    csv << (r.train_schema ? "true" : "false") << "," << (r.eval_schema ? "true" : "false") << "," << exact << ","
        << field << "," << r.n_examples << "\n";
  }
  return csv.str();
}

inline void to_json(nlohmann::json& j, const AccuracyReport& r) {
  j = nlohmann::json{{"train_schema", r.train_schema},
                     {"eval_schema", r.eval_schema},
                     {"exact_match", r.exact_match},
                     {"field_accuracy", r.field_accuracy},
                     {"n_examples", r.n_examples}};
}

inline void from_json(const nlohmann::json& j, AccuracyReport& r) {
  r.train_schema = j.at("train_schema").get<bool>();
  r.eval_schema = j.at("eval_schema").get<bool>();
  r.exact_match = j.at("exact_match").get<double>();
  r.field_accuracy = j.at("field_accuracy").get<double>();
  r.n_examples = j.at("n_examples").get<std::size_t>();
}

}  // namespace mecheval
