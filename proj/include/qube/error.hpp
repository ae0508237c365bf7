#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace qube {

/// Base class for every error this library raises on bad input or bad data.
/// Programming errors (violated preconditions that code cannot reach through
/// the public parsing surfaces) use the standard logic_error family instead.
class QubeError : public std::runtime_error {
 public:
  explicit QubeError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A dimension appeared twice where uniqueness is required (within a tuple,
/// a record, or a constraint expression). line() is 1-based, 0 if unknown.
class DuplicateDimensionError : public QubeError {
 public:
  explicit DuplicateDimensionError(const std::string& dim, std::size_t line = 0)
      : QubeError(line == 0
                      ? "duplicate dimension '" + dim + "'"
                      : "line " + std::to_string(line) +
                            ": duplicate dimension '" + dim + "'"),
        dim_(dim),
        line_(line) {}

  const std::string& dim() const { return dim_; }
  std::size_t line() const { return line_; }

 private:
  std::string dim_;
  std::size_t line_;
};

class EmptyDimensionNameError : public QubeError {
 public:
  EmptyDimensionNameError() : QubeError("empty dimension name") {}
  explicit EmptyDimensionNameError(const std::string& msg) : QubeError(msg) {}
};

/// Two trees disagree about where a path ends: a leaf on one side coincides
/// with an interior node on the other, or two merged leaves carry different
/// payloads. Raised by from_tuples (prefix conflicts) and by union.
class IncompatiblePathError : public QubeError {
 public:
  using QubeError::QubeError;
};

/// Malformed text in the record grammar, the constraint grammar, or the text
/// serialization format. Positions are 1-based; column 0 means "whole line".
class SyntaxError : public QubeError {
 public:
  SyntaxError(std::size_t line, std::size_t column, const std::string& what)
      : QubeError("line " + std::to_string(line) +
                  (column ? ", column " + std::to_string(column) : "") + ": " +
                  what),
        line_(line),
        column_(column) {}

  SyntaxError(std::size_t line, const std::string& what)
      : SyntaxError(line, 0, what) {}

  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

/// Bad indentation in the text serialization format (tabs, odd widths, or a
/// depth jump past parent+1).
class IndentError : public SyntaxError {
 public:
  using SyntaxError::SyntaxError;
};

/// Structurally invalid interchange JSON. path() is a JSON-pointer-like
/// location of the offending element.
class SchemaError : public QubeError {
 public:
  SchemaError(const std::string& path, const std::string& what)
      : QubeError(path + ": " + what), path_(path) {}

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Range predicate endpoints (or a range meeting a value during selection)
/// with different value tags. Always a hard error, never an empty result.
class MixedTagRangeError : public QubeError {
 public:
  using QubeError::QubeError;
};

/// Extraction: a point or box that lies entirely outside the grid.
class OutOfBoundsError : public QubeError {
 public:
  using QubeError::QubeError;
};

/// Extraction: a selected leaf tuple has no entry in the store manifest.
class UnknownFieldError : public QubeError {
 public:
  using QubeError::QubeError;
};

/// Mock store: header magic/index/cell-count mismatch, or a planned range
/// that exceeds a field's payload.
class CorruptFieldError : public QubeError {
 public:
  using QubeError::QubeError;
};

/// Mock store: the file ends before a planned read completes.
class ShortReadError : public QubeError {
 public:
  using QubeError::QubeError;
};

/// Benchmark shape generation would exceed its leaf cap.
class CapExceededError : public QubeError {
 public:
  using QubeError::QubeError;
};

}  // namespace qube
