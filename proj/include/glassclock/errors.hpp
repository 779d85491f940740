#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace glassclock {

class InvalidParameter : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Raised when a coupling tensor would not fit the memory budget.
class SizeBudgetExceeded : public std::length_error {
 public:
  using std::length_error::length_error;
};

class RecordTooShort : public std::out_of_range {
 public:
  RecordTooShort(std::size_t required, std::size_t available)
      : std::out_of_range("clock record too short: need " +
                          std::to_string(required) + " steps, have " +
                          std::to_string(available)),
        required_length(required) {}

  std::size_t required_length;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HorizonError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BiasError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace glassclock
