// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace emoda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A sequence is shorter than the operator geometry allows.
class SequenceTooShortError : public DimensionError {
 public:
  SequenceTooShortError(const std::string& what, std::size_t required)
      : DimensionError(what + " (requires length >= " + std::to_string(required) + ")"),
        required_(required) {}
  std::size_t required() const noexcept { return required_; }

 private:
  std::size_t required_;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Input outside the mathematical domain of a function (e.g. log of a nonpositive value).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A caller violated a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

class LabelError : public Error {
 public:
  using Error::Error;
};

/// Anything wrong with data on disk or in memory: bad files, bad splits, missing classes.
class DataError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public DataError {
 public:
  using DataError::DataError;
};

class SplitError : public DataError {
 public:
  using DataError::DataError;
};

class MissingClassError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace emoda
