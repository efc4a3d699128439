#pragma once

#include <stdexcept>
#include <string>

namespace delib {

// Input data failed validation: bad value, broken cross-reference, malformed row.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Filesystem or stream failure.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace delib
