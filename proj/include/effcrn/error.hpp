// Copyright 2026 the effcrn authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <stdexcept>
#include <string>

namespace effcrn {

// Error taxonomy. ShapeError and UsageError indicate caller bugs,
// ConfigError a bad model/CLI configuration, DataError bad signal data,
// IoError a bad or truncated file.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape error: " + msg) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

struct DataError : Error {
  explicit DataError(const std::string& msg) : Error("data error: " + msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

#define EFFCRN_CHECK(cond, ErrorType, msg) \
  do {                                     \
    if (!(cond)) throw ErrorType(msg);     \
  } while (0)

}  // namespace effcrn
