#pragma once

#include <stdexcept>
#include <string>

namespace talu {

// Base type for every error the library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor dimensions that do not line up for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Dataset content problems: labels out of range, oversubscribed class
// subsets, empty splits.
class DataError : public Error {
 public:
  using Error::Error;
};

// Dataset files that cannot be parsed: wrong magic numbers, truncated or
// oversized payloads. Messages name the offending file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// API misuse: backward on a non-scalar, batchnorm on a single-row batch,
// reading a value that was never produced.
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace talu
