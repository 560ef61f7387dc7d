#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace glmavg {

/// Overflow or non-finite values in a numeric primitive.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SGD iterate left the finite / bounded region.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::int64_t iteration, const std::string& what)
      : std::runtime_error("diverged at iteration " + std::to_string(iteration) + ": " + what),
        iteration_(iteration) {}

  std::int64_t iteration() const { return iteration_; }

 private:
  std::int64_t iteration_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace glmavg
