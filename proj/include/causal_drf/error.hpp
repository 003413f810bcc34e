#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace causal_drf {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public Error {
 public:
  using Error::Error;
};

// Median heuristic is undefined when every pairwise distance is zero.
class AllPointsIdentical : public Error {
 public:
  AllPointsIdentical() : Error("all outcome rows are identical; bandwidth undefined") {}
};

// A candidate child is missing one of the treatment arms.
class EmptyTreatmentArm : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

class MissingColumn : public Error {
 public:
  explicit MissingColumn(const std::string& name)
      : Error("missing column: " + name), column(name) {}
  std::string column;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t row_number, std::string column_name, const std::string& what)
      : Error("parse error at row " + std::to_string(row_number) + ", column '" + column_name +
              "': " + what),
        row(row_number),
        column(std::move(column_name)) {}
  std::size_t row;
  std::string column;
};

class NonBinaryTreatment : public Error {
 public:
  NonBinaryTreatment(std::size_t row_number, const std::string& value)
      : Error("treatment value '" + value + "' at row " + std::to_string(row_number) +
              " is not 0 or 1"),
        row(row_number) {}
  std::size_t row;
};

class SchemaVersionMismatch : public Error {
 public:
  using Error::Error;
};

class CorruptModel : public Error {
 public:
  using Error::Error;
};

}  // namespace causal_drf
