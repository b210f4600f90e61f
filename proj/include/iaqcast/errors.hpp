#pragma once

#include <stdexcept>
#include <string>

namespace iaq {

// Error categories map 1:1 onto C API status codes and CLI exit codes.
enum class ErrorCategory {
  internal = 1,
  config = 2,
  data = 3,
  numeric = 4,
  io = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}

  ErrorCategory category() const noexcept { return cat_; }

  static Error internal(const std::string& m) { return {ErrorCategory::internal, m}; }
  static Error config(const std::string& m) { return {ErrorCategory::config, m}; }
  static Error data(const std::string& m) { return {ErrorCategory::data, m}; }
  static Error numeric(const std::string& m) { return {ErrorCategory::numeric, m}; }
  static Error io(const std::string& m) { return {ErrorCategory::io, m}; }

 private:
  ErrorCategory cat_;
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::config: return "config";
    case ErrorCategory::data: return "data";
    case ErrorCategory::numeric: return "numeric";
    case ErrorCategory::io: return "io";
    default: return "internal";
  }
}

}  // namespace iaq
