#pragma once

#include <stdexcept>
#include <string>

namespace s2fl {

// Error taxonomy shared across modules. Each maps to one failure family so
// tests can assert on the kind, not on message wording.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidSplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PartitionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace s2fl
