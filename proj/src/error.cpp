#include "statekit/error.hpp"

namespace statekit {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::config: return "config error";
    case ErrorKind::data: return "data error";
    case ErrorKind::format: return "format error";
    case ErrorKind::io: return "io error";
    case ErrorKind::numeric: return "numeric error";
  }
  return "error";
}

}  // namespace statekit
