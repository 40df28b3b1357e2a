#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace csi {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One reason per offending field, e.g. {"duration_s", "must be > 0"}.
struct FieldError {
  std::string field;
  std::string reason;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<FieldError> errors);
  const std::vector<FieldError>& errors() const { return errors_; }

 private:
  std::vector<FieldError> errors_;
};

// Raised by operations called in the wrong session phase.
class PhaseError : public Error {
 public:
  using Error::Error;
};

// Raised by language-model backends; callers degrade the cycle to empty.
class BackendError : public Error {
 public:
  using Error::Error;
};

}  // namespace csi
