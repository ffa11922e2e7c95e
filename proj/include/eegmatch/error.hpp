#pragma once

#include <stdexcept>
#include <string>

namespace eegmatch {

enum class ErrorKind {
  InvalidInput,
  InvalidSpec,
  Degenerate,
  ShapeMismatch,
  Io,
  Format,
  NotFound,
  Numerical,
  State,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; the kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

}  // namespace eegmatch
