#pragma once

#include <stdexcept>
#include <string>

namespace deepheart {

// Bad invocation: missing flag, invalid config value. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input data unusable: unreadable file, malformed cache, empty cohort. Exit 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A NaN or Inf was produced during forward or backward. Exit 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace deepheart
