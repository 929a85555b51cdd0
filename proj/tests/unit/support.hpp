#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "mecheval/mecheval.hpp"

namespace mecheval::testing {

inline WordPools compact_pools() { return load_pools(std::string(MECHEVAL_DATA) + "/pools_compact.json"); }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mecheval_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected a mecheval::Error");
}

}  // namespace mecheval::testing
