#pragma once

#include <array>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "mecheval/core/error.hpp"

namespace mecheval {

enum class CorruptionCategory {
  kDBSynonyms,
  kNonDBSynonyms,
  kDBScramble,
  kNonDBScramble,
  kSuperScramble,
};

// Row order of the per-category report table.
inline constexpr std::array<CorruptionCategory, 5> kReportCategoryOrder{
    CorruptionCategory::kDBSynonyms, CorruptionCategory::kDBScramble,
    CorruptionCategory::kNonDBSynonyms, CorruptionCategory::kNonDBScramble,
    CorruptionCategory::kSuperScramble};

inline constexpr std::array<CorruptionCategory, 5> kAllCategories{
    CorruptionCategory::kDBSynonyms, CorruptionCategory::kNonDBSynonyms,
    CorruptionCategory::kDBScramble, CorruptionCategory::kNonDBScramble,
    CorruptionCategory::kSuperScramble};

inline std::string_view to_string(CorruptionCategory c) {
  switch (c) {
    case CorruptionCategory::kDBSynonyms: return "DBSynonyms";
    case CorruptionCategory::kNonDBSynonyms: return "NonDBSynonyms";
    case CorruptionCategory::kDBScramble: return "DBScramble";
    case CorruptionCategory::kNonDBScramble: return "NonDBScramble";
    case CorruptionCategory::kSuperScramble: return "SuperScramble";
  }
  return "?";
}

inline std::string_view display_name(CorruptionCategory c) {
  switch (c) {
    case CorruptionCategory::kDBSynonyms: return "DB-Synonyms";
    case CorruptionCategory::kNonDBSynonyms: return "Non-DB-Syn";
    case CorruptionCategory::kDBScramble: return "DB-Scramble";
    case CorruptionCategory::kNonDBScramble: return "Non-DB-Scr";
    case CorruptionCategory::kSuperScramble: return "Super-Scr";
  }
  return "?";
}

inline CorruptionCategory parse_category(std::string_view text) {
  for (auto c : kAllCategories)
    if (to_string(c) == text) return c;
  fail(ErrorKind::kInput, "unknown corruption category '" + std::string(text) + "'");
}

using SynonymMap = std::map<std::string, std::vector<std::string>>;

struct WordPools {
  SynonymMap db_columns;
  SynonymMap non_db_words;
  SynonymMap table_names;
  std::vector<std::string> instruction_verbs{"Show", "List", "Get", "Find"};

  bool is_db_column(const std::string& w) const { return db_columns.count(w) != 0; }
  bool is_non_db(const std::string& w) const { return non_db_words.count(w) != 0; }

  const std::vector<std::string>& synonyms(const std::string& w) const {
    for (const SynonymMap* m : {&db_columns, &non_db_words, &table_names}) {
      auto it = m->find(w);
      if (it != m->end()) return it->second;
    }
    fail(ErrorKind::kInput, "word '" + w + "' is not in any pool");
  }

  // Symmetric synonym relation: either word lists the other.
  bool related(const std::string& a, const std::string& b) const {
    auto lists = [this](const std::string& x, const std::string& y) {
      for (const SynonymMap* m : {&db_columns, &non_db_words, &table_names}) {
        auto it = m->find(x);
        if (it != m->end())
          for (const auto& s : it->second)
            if (s == y) return true;
      }
      return false;
    };
    return lists(a, b) || lists(b, a);
  }

  // Every word a prompt built from these pools can contain.
  std::set<std::string> all_words() const {
    std::set<std::string> words(instruction_verbs.begin(), instruction_verbs.end());
    for (const SynonymMap* m : {&db_columns, &non_db_words, &table_names})
      for (const auto& [w, syns] : *m) {
        words.insert(w);
        words.insert(syns.begin(), syns.end());
      }
    return words;
  }

  void validate() const {
    auto check = [](bool ok, const std::string& msg) {
      require(ok, ErrorKind::kInput, "invalid word pools: " + msg);
    };
    for (const auto& [w, syns] : db_columns) {
      check(!non_db_words.count(w), "'" + w + "' is both a db column and a non-db word");
      check(!table_names.count(w), "'" + w + "' is both a db column and a table name");
    }
    for (const auto& [w, syns] : non_db_words)
      check(!table_names.count(w), "'" + w + "' is both a non-db word and a table name");
    for (const SynonymMap* m : {&db_columns, &non_db_words, &table_names})
      for (const auto& [w, syns] : *m) {
        check(!syns.empty(), "synonym set of '" + w + "' has fewer than 2 members");
        for (const auto& s : syns) check(s != w, "'" + w + "' lists itself as a synonym");
      }
    check(!instruction_verbs.empty(), "no instruction verbs");
  }
};

inline void to_json(nlohmann::json& j, const WordPools& p) {
  j = nlohmann::json{{"db_columns", p.db_columns},
                     {"non_db_words", p.non_db_words},
                     {"table_names", p.table_names},
                     {"instruction_verbs", p.instruction_verbs}};
}

inline void from_json(const nlohmann::json& j, WordPools& p) {
  try {
    p.db_columns = j.at("db_columns").get<SynonymMap>();
    p.non_db_words = j.at("non_db_words").get<SynonymMap>();
    p.table_names = j.at("table_names").get<SynonymMap>();
    if (j.contains("instruction_verbs")) p.instruction_verbs = j.at("instruction_verbs").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kInput, std::string("malformed pools file: ") + e.what());
  }
  p.validate();
}

inline WordPools load_pools(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open pools file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kConfig, "cannot parse pools file " + path + ": " + e.what());
  }
  return j.get<WordPools>();
}

}  // namespace mecheval
