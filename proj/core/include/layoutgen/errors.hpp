#pragma once

#include <stdexcept>
#include <string>

namespace layoutgen {

// Bad input data (malformed files, invariant violations). Maps to exit code 2.
class InvalidInputError : public std::runtime_error {
 public:
  explicit InvalidInputError(const std::string& what) : std::runtime_error(what) {}
};

// NaN/divergence during numeric work. Maps to exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace layoutgen
