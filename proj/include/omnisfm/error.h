#pragma once

#include <stdexcept>
#include <string>

namespace omnisfm {

// Precondition violated: out-of-range coordinates, non-unit vectors,
// malformed dimensions.
class DomainError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ProjectionUndefinedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheiralityAmbiguousError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the text-format readers; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int line, const std::string& what)
      : std::runtime_error(source + ":" + std::to_string(line) + ": " + what),
        line_(line) {}

  int line() const { return line_; }

 private:
  int line_;
};

}  // namespace omnisfm
