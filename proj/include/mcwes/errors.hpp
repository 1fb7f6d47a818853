#pragma once

#include <stdexcept>
#include <string>

namespace mcwes {

/// Invalid configuration or parameterization (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data / files (CLI exit code 3).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mcwes
