#pragma once

#include <stdexcept>
#include <string>

namespace dynafilter {

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyBufferError : std::runtime_error {
  explicit EmptyBufferError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ActionError : std::runtime_error {
  explicit ActionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NoSupportError : std::runtime_error {
  explicit NoSupportError(const std::string& msg) : std::runtime_error(msg) {}
};

struct InsufficientDataError : std::runtime_error {
  explicit InsufficientDataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EmptyIndexError : std::runtime_error {
  explicit EmptyIndexError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ScheduleError : std::runtime_error {
  explicit ScheduleError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateSampleError : std::runtime_error {
  explicit DegenerateSampleError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace dynafilter
