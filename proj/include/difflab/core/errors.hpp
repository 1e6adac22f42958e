#pragma once

#include <stdexcept>
#include <string>

namespace difflab {

// Bad experiment configuration or CLI usage. CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values, degenerate inputs, failed fits. CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible persisted artifacts (checkpoint/config mismatch). CLI exit code 4.
class ArtifactError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace difflab
