#pragma once

#include <fstream>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "mecheval/core/error.hpp"

namespace mecheval {

template <typename T>
void write_jsonl(const std::vector<T>& records, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kInput, "cannot write " + path);
  for (const auto& r : records) out << nlohmann::json(r).dump() << "\n";
}

template <typename T>
std::vector<T> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kInput, "cannot open " + path);
  std::vector<T> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<T>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kInput, path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace mecheval
