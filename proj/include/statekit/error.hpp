#pragma once

#include <stdexcept>
#include <string>

namespace statekit {

enum class ErrorKind { dimension, config, data, format, io, numeric };

// Base for every error raised by the library. `kind` decides the CLI exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& what) : Error(ErrorKind::dimension, what) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, what) {}
};
struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, what) {}
};
struct IoError : Error {
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& what) : Error(ErrorKind::numeric, what) {}
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace statekit
