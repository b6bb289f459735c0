#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace linrestrict {

// Stable error categories. The string form of each code is part of the CLI
// contract (one-line diagnostics) and must not change.
enum class ErrorCode {
  shape,
  index,
  range,
  query,
  count,
  undefined,
  degenerate,
  unsupported_layer,
  dimension,
  parse,
  schema,
  io,
  usage,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace linrestrict
