#pragma once

#include <stdexcept>
#include <string>

namespace ovmse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad configuration: shape mismatch, unknown key, invalid value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, unreadable or malformed files.
class ArtifactError : public Error {
 public:
  using Error::Error;
};

// Non-finite values reached the learner or optimizer.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Caller broke an API precondition (backward without forward, n=0 eval...).
class UsageError : public Error {
 public:
  using Error::Error;
};

// The environment contract was violated (unavailable action, empty mask,
// stepping a finished episode).
class ContractError : public Error {
 public:
  using Error::Error;
};

}  // namespace ovmse
