#pragma once

#include <stdexcept>
#include <string>

namespace iae {

/// Bad usage, malformed configuration, or missing inputs (CLI exit code 1).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite losses or other numerical breakdowns (CLI exit code 2).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace iae
