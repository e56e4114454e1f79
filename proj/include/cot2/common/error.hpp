#pragma once

#include <stdexcept>
#include <string>

namespace cot2 {

/// Base of every error raised by the library. The CLI maps each subclass to a
/// distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ContextError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public DataError {
 public:
  using DataError::DataError;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class MissingInputError : public Error {
 public:
  using Error::Error;
};

}  // namespace cot2
