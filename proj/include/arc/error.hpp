#pragma once

#include <stdexcept>
#include <string>

namespace arc {

// Shape/axis violations (wrong rank, mismatched dimensions, bad axis).
struct dim_error : std::runtime_error {
  explicit dim_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values where finite ones are required, or training divergence.
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration or incompatible inputs. Maps to CLI exit code 1.
struct config_error : std::runtime_error {
  explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// File ingestion/serialization failures.
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace arc
