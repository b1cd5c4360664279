#ifndef DOCTRIAGE_ERROR_HPP
#define DOCTRIAGE_ERROR_HPP

#include <stdexcept>
#include <string>
#include <utility>

namespace doctriage {

// Error taxonomy mirrored by the CLI exit codes:
//   UsageError -> 1, ConfigError/DataError -> 2, everything else -> 3.

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad or missing configuration (paths that do not exist, invalid values).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// External engine (OCR subprocess, backbone model) failed at runtime.
struct EngineError : std::runtime_error {
  EngineError(const std::string& msg, int exit_code = -1, std::string stderr_text = {})
      : std::runtime_error(msg), exit_code(exit_code), stderr_text(std::move(stderr_text)) {}
  int exit_code;
  std::string stderr_text;
};

struct TimeoutError : EngineError {
  explicit TimeoutError(const std::string& msg) : EngineError(msg) {}
};

// Tensor dimension mismatch between caller and parameters.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite math is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace doctriage

#endif  // DOCTRIAGE_ERROR_HPP
