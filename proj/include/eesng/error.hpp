#pragma once

#include <stdexcept>
#include <string>

namespace eesng {

// Error categories map one-to-one onto the C API status codes and the CLI
// exit codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kConfig = 2,
  kInfeasible = 3,
  kCorruptCheckpoint = 4,
  kInvalidArchitecture = 5,
  kSpaceTooLarge = 6,
  kNonFinite = 7,
  kIo = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace eesng
