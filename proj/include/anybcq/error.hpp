#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace anybcq {

enum class ErrorCode {
  kInvalidArgument,
  kShapeMismatch,
  kIo,
  kBadMagic,
  kTruncated,
  kUnsupportedDtype,
  kVersionMismatch,
  kChecksum,
  kCorrupt,
  kNonFinite,
  kNumeric,
};

std::string_view to_string(ErrorCode code);

// All recoverable failures in the library surface as this exception; the
// code distinguishes the failure class (file formats map each corruption
// class to its own code).
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

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace anybcq
