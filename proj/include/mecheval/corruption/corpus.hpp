#pragma once

#include <algorithm>
#include <cstdint>
#include <cctype>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/core/random.hpp"
#include "mecheval/corruption/generate.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/corruption/prompt.hpp"
#include "mecheval/runtime/tokenizer.hpp"

namespace mecheval {

// Template tokens every fixture vocabulary carries, in id order.
inline const std::vector<std::string>& structural_tokens() {
  static const std::vector<std::string> tokens{
      std::string(FixtureTokenizer::kEndOfText), "###", "Instruction:", "Context:", "###Response:",
      "CREATE", "TABLE", "(", "TEXT", ")", "SELECT", "FROM", "from"};
  return tokens;
}

inline FixtureTokenizer fixture_vocabulary(const WordPools& pools) {
  std::vector<std::string> tokens = structural_tokens();
  const std::set<std::string> reserved(tokens.begin(), tokens.end());
  for (const auto& w : pools.all_words()) {
    require(!reserved.count(w), ErrorKind::kInput, "pool word '" + w + "' collides with a template token");
    tokens.push_back(w);
  }
  return FixtureTokenizer(std::move(tokens));
}

struct FixtureCorpus {
  std::vector<SqlExample> train;
  std::vector<SqlExample> test;
};

// TinySQL-shaped single-column examples. The test split holds out whole
// (table, column) combinations so no combination appears in both splits.
inline FixtureCorpus build_fixture_corpus(const WordPools& pools, std::size_t n_examples, std::uint64_t seed,
                                          double test_fraction = 0.2) {
  std::vector<std::pair<std::string, std::string>> combos;
  for (const auto& [table, tsyn] : pools.table_names)
    for (const auto& [column, csyn] : pools.db_columns) combos.emplace_back(table, column);
  require(combos.size() >= 2, ErrorKind::kInput, "insufficient pools: need at least two (table, column) combinations");

  Rng rng({seed, 0xC0FFEEull});
  rng.shuffle(combos);
  auto n_test = static_cast<std::size_t>(test_fraction * static_cast<double>(combos.size()) + 0.5);
  n_test = std::clamp<std::size_t>(n_test, 1, combos.size() - 1);

  FixtureCorpus corpus;
  for (std::size_t i = 0; i < n_examples; ++i) {
    const auto& [table, column] = combos[i % combos.size()];
    const auto& verb = pools.instruction_verbs[rng.index(pools.instruction_verbs.size())];
    SqlExample ex{instruction_for(pools, verb, column, table), create_statement(table, column),
                  select_statement(table, column)};
    ((i % combos.size()) < n_test ? corpus.test : corpus.train).push_back(std::move(ex));
  }
  return corpus;
}

// (table, column) of a "SELECT c FROM t" statement; nullopt when it does not
// follow that grammar.
inline std::optional<std::pair<std::string, std::string>> parse_select(const std::string& sql) {
  std::vector<std::string> words;
  std::string w;
  for (char c : sql) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!w.empty()) words.push_back(std::move(w));
      w.clear();
    } else {
      w.push_back(c);
    }
  }
  if (!w.empty()) words.push_back(std::move(w));
  auto upper = [](std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
  };
  if (words.size() != 4 || upper(words[0]) != "SELECT" || upper(words[2]) != "FROM") return std::nullopt;
  return std::make_pair(words[3], words[1]);
}

}  // namespace mecheval
