#pragma once

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"

namespace mecheval {

struct SqlExample {
  std::string english_prompt;
  std::string create_statement;  // CREATE TABLE t (c TEXT)
  std::string sql_statement;     // SELECT c FROM t

  bool operator==(const SqlExample&) const = default;
};

inline constexpr const char* kInstructionHeader = "### Instruction: ";
inline constexpr const char* kContextHeader = " ### Context: ";
// No space between ### and Response.
inline constexpr const char* kResponseHeader = " ###Response:";

// Everything up to and including the response marker; decoding starts here.
inline std::string render_prompt_prefix(const SqlExample& ex, bool include_schema) {
  return std::string(kInstructionHeader) + ex.english_prompt + kContextHeader +
         (include_schema ? ex.create_statement : std::string()) + kResponseHeader;
}

inline std::string render_prompt(const SqlExample& ex, bool include_schema) {
  return render_prompt_prefix(ex, include_schema) + " " + ex.sql_statement;
}

inline std::string create_statement(const std::string& table, const std::string& column) {
  return "CREATE TABLE " + table + " (" + column + " TEXT)";
}

inline std::string select_statement(const std::string& table, const std::string& column) {
  return "SELECT " + column + " FROM " + table;
}

inline void to_json(nlohmann::json& j, const SqlExample& e) {
  j = nlohmann::json{{"english_prompt", e.english_prompt},
                     {"create_statement", e.create_statement},
                     {"sql_statement", e.sql_statement}};
}

inline void from_json(const nlohmann::json& j, SqlExample& e) {
  e.english_prompt = j.at("english_prompt").get<std::string>();
  e.create_statement = j.at("create_statement").get<std::string>();
  e.sql_statement = j.at("sql_statement").get<std::string>();
}

namespace detail {

// RFC 4180 record splitting: quoted fields may contain commas, doubled
// quotes and newlines.
inline std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  require(!quoted, ErrorKind::kInput, "unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

// Reads .jsonl/.json-lines or .csv with english_prompt, create_statement and
// sql_statement columns.
inline std::vector<SqlExample> load_examples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::kConfig, "cannot open dataset " + path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<SqlExample> out;
  const bool is_csv = path.size() >= 4 && path.substr(path.size() - 4) == ".csv";
  if (is_csv) {
    const auto rows = detail::parse_csv(text);
    require(!rows.empty(), ErrorKind::kInput, "empty CSV dataset " + path);
    int col_prompt = -1, col_create = -1, col_sql = -1;
    for (std::size_t i = 0; i < rows[0].size(); ++i) {
      if (rows[0][i] == "english_prompt") col_prompt = static_cast<int>(i);
      if (rows[0][i] == "create_statement") col_create = static_cast<int>(i);
      if (rows[0][i] == "sql_statement") col_sql = static_cast<int>(i);
    }
    require(col_prompt >= 0 && col_create >= 0 && col_sql >= 0, ErrorKind::kInput,
            "CSV header must name english_prompt, create_statement and sql_statement");
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      const auto width = static_cast<std::size_t>(std::max({col_prompt, col_create, col_sql}));
      require(row.size() > width, ErrorKind::kInput, "short CSV row " + std::to_string(r));
      out.push_back({row[col_prompt], row[col_create], row[col_sql]});
    }
    return out;
  }
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<SqlExample>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kInput, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void save_examples(const std::vector<SqlExample>& examples, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kInput, "cannot write " + path);
  for (const auto& e : examples) out << nlohmann::json(e).dump() << "\n";
}

}  // namespace mecheval
