#pragma once

#include <stdexcept>
#include <string>

namespace dadg {

inline constexpr const char* kVersion = "0.1.0";

// Bad or inconsistent run configuration. CLI exit code 1.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Training produced a non-finite loss. CLI exit code 2.
struct DivergenceError : std::runtime_error {
  DivergenceError(int iteration, const std::string& msg)
      : std::runtime_error("divergence at iteration " + std::to_string(iteration) + ": " + msg),
        iteration(iteration) {}
  int iteration;
};

// Unreadable, unwritable or malformed data on disk. CLI exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dadg
