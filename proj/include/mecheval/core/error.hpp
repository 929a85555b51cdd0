#pragma once

#include <stdexcept>
#include <string>

namespace mecheval {

// Broad failure classes; the CLI maps each to a distinct exit code.
enum class ErrorKind {
  kConfig,
  kModelLoad,
  kPipeline,
  kInput,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace mecheval
