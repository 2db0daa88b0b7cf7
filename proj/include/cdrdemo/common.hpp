#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace cdrdemo {

using NodeId = std::uint32_t;
using Category = std::int32_t;

inline constexpr NodeId kInvalidNode = std::numeric_limits<NodeId>::max();
inline constexpr Category kNoCategory = -1;

// Bad input data (malformed rows, missing ids, inconsistent shapes). The CLI
// maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid arguments or configuration. The CLI maps this to exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Row-level parse failure carrying the 1-based line number.
class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

}  // namespace cdrdemo
