#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace geosage {

// Base of everything thrown by the library. The three direct children map
// onto the CLI exit codes: usage -> 1, data -> 2, internal -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UsageError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct InternalError : Error {
  using Error::Error;
};

struct InvalidCoordinate : DataError {
  using DataError::DataError;
};

struct PointOutsideBbox : DataError {
  using DataError::DataError;
};

struct NoData : DataError {
  using DataError::DataError;
};

// One unparseable input line; collected during parsing, not thrown.
struct MalformedRecord {
  std::size_t line = 0;
  std::string reason;
};

// Thrown when more than the tolerated fraction of input lines is malformed.
struct ParseError : DataError {
  using DataError::DataError;
};

struct VersionMismatch : DataError {
  using DataError::DataError;
};

struct CorruptModel : DataError {
  using DataError::DataError;
};

struct CorruptCorpus : DataError {
  using DataError::DataError;
};

struct EmptyCorpus : DataError {
  using DataError::DataError;
};

struct DictMismatch : DataError {
  using DataError::DataError;
};

struct EmptyTestSet : DataError {
  using DataError::DataError;
};

struct RejectionCapExceeded : DataError {
  using DataError::DataError;
};

struct NonFiniteObjective : InternalError {
  using InternalError::InternalError;
};

}  // namespace geosage
