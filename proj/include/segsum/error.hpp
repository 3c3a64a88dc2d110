#pragma once

#include <stdexcept>
#include <string>

namespace segsum {

/// Input that violates a documented contract (bad manifest, bad bbox, ...).
/// The CLI maps it to exit code 1.
class ValidationError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Failure while executing a stage (model call, remote backend, I/O).
/// The CLI maps it to exit code 2.
class RuntimeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

} // namespace segsum
