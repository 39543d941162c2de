#pragma once

#include <stdexcept>
#include <string>

namespace morphkit {

// Malformed or inconsistent input data (empty corpus, mismatched index, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or divergence during numerical work.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace morphkit
