#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace tpc {

// Base for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A malformed input record: names the file, the 1-based record (line) number
// and the offending field.
class FormatError : public Error {
 public:
  FormatError(std::string source, std::size_t record, std::string field,
              const std::string& what)
      : Error(source + ":" + std::to_string(record) + ": field '" + field +
              "': " + what),
        source_(std::move(source)),
        record_(record),
        field_(std::move(field)) {}

  const std::string& source() const { return source_; }
  std::size_t record() const { return record_; }
  const std::string& field() const { return field_; }

 private:
  std::string source_;
  std::size_t record_;
  std::string field_;
};

// Structurally valid input that violates a domain invariant.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace tpc
