#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aop {

/// Machine-readable failure category. The CLI maps each to its own exit code.
enum class ErrorCategory {
  input = 2,
  state = 3,
  degenerate_input = 4,
  parse = 5,
  validation = 6,
  config = 7,
  io = 8,
  invariant = 9,
};

std::string_view category_name(ErrorCategory category) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

struct InputError : Error {
  explicit InputError(const std::string& m) : Error(ErrorCategory::input, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorCategory::state, m) {}
};
struct DegenerateInputError : Error {
  explicit DegenerateInputError(const std::string& m)
      : Error(ErrorCategory::degenerate_input, m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorCategory::parse, m) {}
};
struct ValidationError : Error {
  explicit ValidationError(const std::string& m)
      : Error(ErrorCategory::validation, m) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorCategory::config, m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(ErrorCategory::io, m) {}
};
/// Raised when an internal invariant (e.g. the trigger norm bound) is broken.
struct InvariantError : Error {
  explicit InvariantError(const std::string& m)
      : Error(ErrorCategory::invariant, m) {}
};

inline std::string_view category_name(ErrorCategory category) noexcept {
  switch (category) {
    case ErrorCategory::input: return "input";
    case ErrorCategory::state: return "state";
    case ErrorCategory::degenerate_input: return "degenerate-input";
    case ErrorCategory::parse: return "parse";
    case ErrorCategory::validation: return "validation";
    case ErrorCategory::config: return "config";
    case ErrorCategory::io: return "io";
    case ErrorCategory::invariant: return "invariant";
  }
  return "unknown";
}

}  // namespace aop
