#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace capconf {

// Base of every typed error thrown by the library. The CLI maps these to
// exit code 2 (validation/usage); anything else escaping is an internal
// error (exit 1).
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk data: bad NPY magic/header, bad JSON line, bad CSV cell.
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
  FormatError(const std::string& msg, std::size_t line)
      : Error(msg + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_ = 0;
};

// Well-formed NPY that this artifact does not accept: fortran_order,
// non-2D shape, non-float or big-endian dtype.
class UnsupportedLayout : public Error {
 public:
  explicit UnsupportedLayout(const std::string& msg) : Error(msg) {}
};

// A row whose L2 norm is below the degeneracy threshold, or which holds a
// non-finite entry. Cosine distance is undefined there; such rows are
// rejected rather than patched.
class DegenerateRow : public Error {
 public:
  DegenerateRow(const std::string& msg, std::size_t row)
      : Error(msg + " (row " + std::to_string(row) + ")"), row_(row) {}
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

// Label-query construction where the caption mean cancels to ~zero.
class DegenerateQuery : public Error {
 public:
  explicit DegenerateQuery(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error(msg) {}
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(const std::string& id)
      : Error("duplicate row id \"" + id + "\""), id_(id) {}
  const std::string& id() const { return id_; }

 private:
  std::string id_;
};

// roc_auc over a single class has no defined value.
class UndefinedAuroc : public Error {
 public:
  explicit UndefinedAuroc(const std::string& msg) : Error(msg) {}
};

}  // namespace capconf
