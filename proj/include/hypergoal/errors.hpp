#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hypergoal {

/// Incompatible tensor or parameter shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A NaN or infinity appeared where finite values are required.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t node = npos)
      : std::runtime_error(what), node_(node) {}

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t node() const { return node_; }

 private:
  std::size_t node_;
};

/// Malformed, truncated or mismatched on-disk artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// On-disk artifact carries an unsupported version tag.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Invalid configuration or argument detected before any work starts.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace hypergoal
