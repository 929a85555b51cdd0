#pragma once

#include <cstddef>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/runtime/model.hpp"

namespace mecheval {

// Clean and corrupted prompts that differ only on [span_begin, span_end).
struct PromptPair {
  std::string id;
  CorruptionCategory category = CorruptionCategory::kDBSynonyms;
  TokenSequence clean;
  TokenSequence corrupted;
  std::size_t span_begin = 0;
  std::size_t span_end = 0;
  TokenId correct_token = 0;
  TokenId incorrect_token = 0;
  std::size_t eval_position = 0;

  // Provenance, carried through serialization for readable reports.
  std::string clean_word;
  std::string corrupted_word;
  std::string clean_text;
  std::string corrupted_text;

  std::size_t span_size() const { return span_end - span_begin; }

  void validate() const {
    auto check = [this](bool ok, const std::string& msg) {
      require(ok, ErrorKind::kInput, "invalid prompt pair '" + id + "': " + msg);
    };
    check(!clean.empty(), "empty sequence");
    check(clean.size() == corrupted.size(), "clean and corrupted lengths differ");
    check(span_begin <= span_end && span_end <= clean.size(), "span out of range");
    check(eval_position + 1 == clean.size(), "eval_position must be the final index");
    for (std::size_t p = 0; p < clean.size(); ++p)
      if (p < span_begin || p >= span_end) check(clean[p] == corrupted[p], "sequences differ outside the span");
    if (span_begin < span_end) {
      check(clean[span_begin] != corrupted[span_begin], "span does not start at a difference");
      check(clean[span_end - 1] != corrupted[span_end - 1], "span does not end at a difference");
      check(correct_token != incorrect_token, "correct and incorrect tokens coincide");
    }
  }

  bool operator==(const PromptPair&) const = default;
};

// Smallest [begin, end) covering every position where the sequences differ.
// Sequences must have equal length.
inline std::pair<std::size_t, std::size_t> differing_span(const TokenSequence& a, const TokenSequence& b) {
  require(a.size() == b.size(), ErrorKind::kInput, "sequences have different lengths");
  std::size_t begin = 0;
  while (begin < a.size() && a[begin] == b[begin]) ++begin;
  if (begin == a.size()) return {0, 0};
  std::size_t end = a.size();
  while (end > begin && a[end - 1] == b[end - 1]) --end;
  return {begin, end};
}

inline void to_json(nlohmann::json& j, const PromptPair& p) {
  j = nlohmann::json{{"id", p.id},
                     {"category", std::string(to_string(p.category))},
                     {"clean", p.clean},
                     {"corrupted", p.corrupted},
                     {"schema_span", {p.span_begin, p.span_end}},
                     {"correct_token", p.correct_token},
                     {"incorrect_token", p.incorrect_token},
                     {"eval_position", p.eval_position},
                     {"clean_word", p.clean_word},
                     {"corrupted_word", p.corrupted_word},
                     {"clean_text", p.clean_text},
                     {"corrupted_text", p.corrupted_text}};
}

inline void from_json(const nlohmann::json& j, PromptPair& p) {
  p.id = j.at("id").get<std::string>();
  p.category = parse_category(j.at("category").get<std::string>());
  p.clean = j.at("clean").get<TokenSequence>();
  p.corrupted = j.at("corrupted").get<TokenSequence>();
  const auto span = j.at("schema_span").get<std::vector<std::size_t>>();
  require(span.size() == 2, ErrorKind::kInput, "schema_span must be [begin, end]");
  p.span_begin = span[0];
  p.span_end = span[1];
  p.correct_token = j.at("correct_token").get<TokenId>();
  p.incorrect_token = j.at("incorrect_token").get<TokenId>();
  p.eval_position = j.at("eval_position").get<std::size_t>();
  p.clean_word = j.value("clean_word", std::string());
  p.corrupted_word = j.value("corrupted_word", std::string());
  p.clean_text = j.value("clean_text", std::string());
  p.corrupted_text = j.value("corrupted_text", std::string());
}

}  // namespace mecheval
