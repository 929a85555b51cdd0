#pragma once

#include <cstdint>
#include <algorithm>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "mecheval/core/error.hpp"
#include "mecheval/core/random.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/corruption/prompt.hpp"
#include "mecheval/patching/prompt_pair.hpp"
#include "mecheval/runtime/tokenizer.hpp"

namespace mecheval {

// Word pairs (clean, corrupted) admissible for a category.
inline std::vector<std::pair<std::string, std::string>> category_word_pairs(const WordPools& pools,
                                                                            CorruptionCategory category) {
  std::vector<std::pair<std::string, std::string>> out;
  auto add_within = [&](const SynonymMap& words, bool want_related) {
    for (const auto& [a, sa] : words)
      for (const auto& [b, sb] : words)
        if (a != b && pools.related(a, b) == want_related) out.emplace_back(a, b);
  };
  switch (category) {
    case CorruptionCategory::kDBSynonyms: add_within(pools.db_columns, true); break;
    case CorruptionCategory::kNonDBSynonyms: add_within(pools.non_db_words, true); break;
    case CorruptionCategory::kDBScramble: add_within(pools.db_columns, false); break;
    case CorruptionCategory::kNonDBScramble: add_within(pools.non_db_words, false); break;
    case CorruptionCategory::kSuperScramble:
      for (const auto& [a, sa] : pools.db_columns)
        for (const auto& [b, sb] : pools.non_db_words)
          if (!pools.related(a, b)) out.emplace_back(a, b);
      break;
  }
  return out;
}

// Re-derives a pair's category from pool membership and the synonym relation.
inline std::optional<CorruptionCategory> classify_word_pair(const WordPools& pools, const std::string& clean,
                                                            const std::string& corrupted) {
  const bool rel = pools.related(clean, corrupted);
  if (pools.is_db_column(clean) && pools.is_db_column(corrupted))
    return rel ? CorruptionCategory::kDBSynonyms : CorruptionCategory::kDBScramble;
  if (pools.is_non_db(clean) && pools.is_non_db(corrupted))
    return rel ? CorruptionCategory::kNonDBSynonyms : CorruptionCategory::kNonDBScramble;
  if (pools.is_db_column(clean) && pools.is_non_db(corrupted) && !rel) return CorruptionCategory::kSuperScramble;
  return std::nullopt;
}

// Instruction text for a (column, table): the dataset phrases both through
// synonyms, "<verb> <column synonym> from <table synonym>".
inline std::string instruction_for(const WordPools& pools, const std::string& verb, const std::string& column,
                                   const std::string& table) {
  return verb + " " + pools.synonyms(column).front() + " from " + pools.synonyms(table).front();
}

// Prompt text whose final token precedes the column slot of the answer.
inline std::string pair_prompt_text(const std::string& english, const std::string& table,
                                    const std::string& column) {
  const SqlExample ex{english, create_statement(table, column), ""};
  return render_prompt_prefix(ex, true) + " SELECT";
}

namespace detail {

// First token of `word` when it follows `prompt`; nullopt when the tokenizer
// merges across the boundary.
inline std::optional<TokenId> answer_token(const Tokenizer& tok, const TokenSequence& prompt_ids,
                                           const std::string& prompt, const std::string& word) {
  const TokenSequence full = tok.encode(prompt + " " + word);
  if (full.size() <= prompt_ids.size()) return std::nullopt;
  if (!std::equal(prompt_ids.begin(), prompt_ids.end(), full.begin())) return std::nullopt;
  return full[prompt_ids.size()];
}

}  // namespace detail

// Draws n distinct pairs of one category without replacement. A candidate is
// (clean word, corrupted word, table, verb); candidates whose two prompts
// tokenize to different lengths are skipped.
inline std::vector<PromptPair> generate_pairs(const WordPools& pools, CorruptionCategory category, std::size_t n,
                                              std::uint64_t seed, const Tokenizer& tokenizer) {
  if (n == 0) return {};
  const auto word_pairs = category_word_pairs(pools, category);
  require(!word_pairs.empty(), ErrorKind::kInput,
          "category " + std::string(to_string(category)) + " unsatisfiable with given pools");

  std::vector<std::string> tables;
  for (const auto& [t, syns] : pools.table_names) tables.push_back(t);
  require(!tables.empty(), ErrorKind::kInput, "insufficient pool: no table names");

  using Candidate = std::tuple<std::size_t, std::size_t, std::size_t>;
  std::vector<Candidate> candidates;
  for (std::size_t w = 0; w < word_pairs.size(); ++w)
    for (std::size_t t = 0; t < tables.size(); ++t)
      for (std::size_t v = 0; v < pools.instruction_verbs.size(); ++v) candidates.emplace_back(w, t, v);
  require(candidates.size() >= n, ErrorKind::kInput,
          "insufficient pool: " + std::to_string(candidates.size()) + " distinct " +
              std::string(to_string(category)) + " pairs available, " + std::to_string(n) + " requested");

  Rng rng({seed, static_cast<std::uint64_t>(category) + 1});
  std::vector<PromptPair> pairs;
  for (std::size_t i = 0; i < candidates.size() && pairs.size() < n; ++i) {
    std::swap(candidates[i], candidates[i + rng.index(candidates.size() - i)]);
    const auto [w, t, v] = candidates[i];
    const auto& [clean_word, corrupted_word] = word_pairs[w];
    const std::string english = instruction_for(pools, pools.instruction_verbs[v], clean_word, tables[t]);

    PromptPair pair;
    pair.category = category;
    pair.clean_word = clean_word;
    pair.corrupted_word = corrupted_word;
    pair.clean_text = pair_prompt_text(english, tables[t], clean_word);
    pair.corrupted_text = pair_prompt_text(english, tables[t], corrupted_word);
    pair.clean = tokenizer.encode(pair.clean_text);
    pair.corrupted = tokenizer.encode(pair.corrupted_text);
    if (pair.clean.size() != pair.corrupted.size()) continue;
    std::tie(pair.span_begin, pair.span_end) = differing_span(pair.clean, pair.corrupted);
    if (pair.span_begin == pair.span_end) continue;
    const auto correct = detail::answer_token(tokenizer, pair.clean, pair.clean_text, clean_word);
    const auto incorrect = detail::answer_token(tokenizer, pair.corrupted, pair.corrupted_text, corrupted_word);
    if (!correct || !incorrect || *correct == *incorrect) continue;
    pair.correct_token = *correct;
    pair.incorrect_token = *incorrect;
    pair.eval_position = pair.clean.size() - 1;
    std::ostringstream id;
    id << to_string(category) << "-" << std::setw(3) << std::setfill('0') << pairs.size();
    pair.id = id.str();
    pair.validate();
    pairs.push_back(std::move(pair));
  }
  require(pairs.size() == n, ErrorKind::kInput,
          "insufficient pool: only " + std::to_string(pairs.size()) + " " + std::string(to_string(category)) +
              " pairs survive tokenization, " + std::to_string(n) + " requested");
  return pairs;
}

// The evaluation set: per_category pairs for each of the five categories.
inline std::vector<PromptPair> generate_suite(const WordPools& pools, std::size_t per_category, std::uint64_t seed,
                                              const Tokenizer& tokenizer) {
  std::vector<PromptPair> all;
  for (auto c : kAllCategories) {
    auto pairs = generate_pairs(pools, c, per_category, seed, tokenizer);
    all.insert(all.end(), pairs.begin(), pairs.end());
  }
  return all;
}

}  // namespace mecheval
