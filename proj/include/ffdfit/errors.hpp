#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ffdfit {

// Malformed input file. Carries the 1-based line number when known (0 otherwise).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class FileNotFound : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

class UnsupportedFormat : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Geometry for which the requested quantity is undefined (zero area, zero extent).
class DegenerateGeometry : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Two inputs whose sizes or shapes must agree do not.
class SizeMismatch : public std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, std::string key)
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace ffdfit
