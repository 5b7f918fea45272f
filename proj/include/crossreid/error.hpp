#pragma once

#include <stdexcept>
#include <string>

namespace crossreid {

/// Tensor shape or dimension violation.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid or missing configuration value. The message names the key.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Filesystem or decoding failure. The message names the path.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace crossreid
