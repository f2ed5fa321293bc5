#pragma once

#include <stdexcept>
#include <string>

namespace sdflyer {

// Failure categories. The CLI maps each one onto a fixed process exit code.
enum class ErrorKind {
  Config = 2,       // invalid configuration, missing inputs, shape mismatch
  Divergence = 3,   // non-finite loss or state during training / simulation
  Conversion = 4,   // source network cannot be converted (non-ReLU hidden layers)
  Integrity = 5,    // checksum mismatch, out-of-range integer, index fault
  Incompatible = 6  // reports that cannot be compared
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace sdflyer
