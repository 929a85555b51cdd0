#pragma once

#include <cctype>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/corruption/corpus.hpp"

namespace mecheval {

// Collapses whitespace runs to one space and trims both ends.
inline std::string normalize_whitespace(const std::string& s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline bool exact_match(const std::string& pred, const std::string& gold) {
  return normalize_whitespace(pred) == normalize_whitespace(gold);
}

struct FieldScore {
  std::size_t correct = 0;
  std::size_t total = 0;

  double ratio() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
  FieldScore& operator+=(const FieldScore& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

namespace detail {

inline bool keyword_equals(const std::string& word, const char* keyword) {
  std::size_t i = 0;
  for (; keyword[i] != '\0'; ++i)
    if (i >= word.size() || std::toupper(static_cast<unsigned char>(word[i])) != keyword[i]) return false;
  return i == word.size();
}

inline std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  const std::string n = normalize_whitespace(s);
  std::size_t start = 0;
  while (start < n.size()) {
    std::size_t end = n.find(' ', start);
    if (end == std::string::npos) end = n.size();
    out.push_back(n.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

// Word following the first occurrence of `keyword`, unless it is itself a keyword.
inline std::string slot_after(const std::vector<std::string>& words, const char* keyword) {
  for (std::size_t i = 0; i + 1 < words.size(); ++i)
    if (keyword_equals(words[i], keyword)) {
      const auto& next = words[i + 1];
      if (keyword_equals(next, "SELECT") || keyword_equals(next, "FROM")) return {};
      return next;
    }
  return {};
}

}  // namespace detail

// Positional match of the gold column and table names (SELECT/FROM excluded).
// Malformed predictions score 0 on each slot they fail to fill.
inline FieldScore field_score(const std::string& pred, const std::string& gold) {
  const auto parsed = parse_select(gold);
  require(parsed.has_value(), ErrorKind::kInput, "gold SQL does not parse as SELECT x FROM y: '" + gold + "'");
  const auto& [gold_table, gold_column] = *parsed;
  const auto words = detail::words_of(pred);
  FieldScore s;
  s.total = 2;
  s.correct += detail::slot_after(words, "SELECT") == gold_column;
  s.correct += detail::slot_after(words, "FROM") == gold_table;
  return s;
}

inline double field_accuracy(const std::string& pred, const std::string& gold) {
  return field_score(pred, gold).ratio();
}

}  // namespace mecheval
