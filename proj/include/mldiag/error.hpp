#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mldiag {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input document. `locus` is a field path such as
// "components[3].id"; `line` is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::string locus, std::size_t line = 0)
      : Error(format(message, locus, line)), locus_(std::move(locus)), line_(line) {}

  const std::string& locus() const noexcept { return locus_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& message, const std::string& locus,
                            std::size_t line) {
    std::string out;
    if (line > 0) out += "line " + std::to_string(line) + ": ";
    if (!locus.empty()) out += locus + ": ";
    return out + message;
  }

  std::string locus_;
  std::size_t line_;
};

class ModelError : public Error {
 public:
  enum class Kind {
    kDuplicateId,
    kDanglingReference,
    kUnknownComponent,
    kUnknownProbe,
    kInvalid,
  };

  ModelError(Kind kind, const std::string& message) : Error(message), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Inconsistent data: probe-set mismatches, bin misalignment, missing
// features, too few baseline samples.
class DataError : public Error {
 public:
  using Error::Error;
};

// z-score requested with a spread at or below the configured floor.
class DegenerateSpreadError : public Error {
 public:
  using Error::Error;
};

// Certainty factors of +1 and -1 cannot be combined.
class ContradictionError : public Error {
 public:
  using Error::Error;
};

}  // namespace mldiag
