#pragma once

#include <stdexcept>
#include <string>

namespace trink {

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// Raised when a NaN/Inf crosses a check barrier.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VocabularyError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct LengthError : std::length_error {
  using std::length_error::length_error;
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ParseError : std::runtime_error {
  ParseError(const std::string& where, std::size_t line, const std::string& what)
      : std::runtime_error(where + ":" + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

struct RecognizerError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace trink
