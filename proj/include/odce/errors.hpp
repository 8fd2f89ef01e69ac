#pragma once

#include <stdexcept>
#include <string>

namespace odce {

// Bad user input: malformed config values, unusable flag combinations.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem trouble: unreadable config, unwritable output directory.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical degeneracy detected at run time (non-dominating importance
// density, weight underflow that cannot be recovered, and the like).
struct DegeneracyError : std::runtime_error {
  explicit DegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace odce
