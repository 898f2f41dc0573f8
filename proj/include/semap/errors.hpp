#pragma once

#include <stdexcept>
#include <string>

namespace semap {

// Caller passed a value outside an operation's domain.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A requested materialization exceeds the configured size limit.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal invariant (e.g. encoding a non-canonical tree).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace semap
