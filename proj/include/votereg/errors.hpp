#pragma once

#include <stdexcept>
#include <string>

namespace votereg {

// Error taxonomy shared by all modules. Callers that can recover catch the
// specific class; the CLI maps them onto exit codes.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid arguments or malformed inputs (bad dimensions excepted, see below).
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what) {}
};

// Mismatched vector/matrix dimensions.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& what) : Error(what) {}
};

// Singular systems, degenerate bandwidths, failed factorizations.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what) {}
};

// Malformed file contents; carries a 1-based location when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, long row = 0, long column = 0)
      : Error(format(what, row, column)), row_(row), column_(column) {}

  long row() const { return row_; }
  long column() const { return column_; }

 private:
  static std::string format(const std::string& what, long row, long column) {
    if (row <= 0) return what;
    std::string out = what + " (row " + std::to_string(row);
    if (column > 0) out += ", column " + std::to_string(column);
    return out + ")";
  }

  long row_;
  long column_;
};

}  // namespace votereg
