#pragma once

#include <stdexcept>
#include <string>

namespace tubespoof {

// Mirrors tsp_status in the C API; values must stay in sync.
enum class ErrorCode : int {
  InvalidArgument = 1,
  Domain = 2,
  Io = 3,
  Format = 4,
  NoSpeech = 5,
  Timeout = 6,
  Protocol = 7,
  Internal = 99,
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

inline void require(bool cond, const std::string& what,
                    ErrorCode code = ErrorCode::InvalidArgument) {
  if (!cond) fail(code, what);
}

}  // namespace tubespoof
