#pragma once

#include <stdexcept>
#include <string>

namespace pcp {

// Failure classes surfaced by the command line as distinct exit codes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A signal has no usable variation (constant input, empty band, no peak).
class DegenerateSignal : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace pcp
