#pragma once

#include <stdexcept>
#include <string>

namespace dbdiag {

/// Coarse error category. The CLI maps each category onto an exit code.
enum class ErrorCategory { Usage, Data, Model, Internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

// Invalid configuration: bad flags, bad split fractions, bad architecture text.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorCategory::Usage, what) {}
};

// Malformed or incompatible input data, including feature-name mismatches.
class DataError : public Error {
 public:
  explicit DataError(const std::string& what) : Error(ErrorCategory::Data, what) {}
};

// Model files that cannot be loaded, or models that cannot be trained.
class ModelError : public Error {
 public:
  explicit ModelError(const std::string& what) : Error(ErrorCategory::Model, what) {}
};

class TrainingError : public ModelError {
 public:
  using ModelError::ModelError;
};

// Broken internal contracts (backward without forward, missing paired state).
class InternalError : public Error {
 public:
  explicit InternalError(const std::string& what) : Error(ErrorCategory::Internal, what) {}
};

inline int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return 2;
    case ErrorCategory::Data: return 3;
    case ErrorCategory::Model: return 4;
    case ErrorCategory::Internal: return 5;
  }
  return 5;
}

}  // namespace dbdiag
