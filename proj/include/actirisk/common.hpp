#pragma once

#include <stdexcept>
#include <string>

namespace actirisk {

// Bad input data or violated preconditions (CLI exit code 2).
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Numerical failure: divergence, singular systems, NaN poisoning (exit code 3).
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Command-line or configuration misuse (exit code 1).
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline constexpr const char* kToolVersion = "0.1.0";

} // namespace actirisk
