#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace ipinf {

/// Malformed CSV input; carries the 1-based data row when known.
class CsvFormatError : public std::runtime_error {
 public:
  explicit CsvFormatError(std::string msg, long row = -1)
      : std::runtime_error(std::move(msg)), row_(row) {}
  long row() const noexcept { return row_; }

 private:
  long row_;
};

/// Numeric failure: non-finite solve, divergent iteration. CLI exit code 3.
class NumericError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or command line. CLI exit code 2.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace ipinf
