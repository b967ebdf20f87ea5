#pragma once

#include <stdexcept>
#include <string>

namespace stratfx {

enum class ErrorKind {
  usage,          // bad flags / option ranges
  schema,         // missing CSV column
  io,             // unreadable or unwritable file
  validation,     // bad value in an input row
  empty_input,
  simplex,        // share vector outside the open simplex
  duplicate,      // duplicate grid point
  empty_stratum,  // n_{d,w} = 0 where an estimator needs it
  degenerate,     // zero variance, everything trimmed, ...
  isolated_point, // lambda_1 + lambda_0 = 0
  index,
  domain,
  infeasible,     // rejection sampler stalled
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // 2 usage, 3 IO, 4 numerical / degenerate input.
  int exit_code() const noexcept {
    switch (kind_) {
    case ErrorKind::usage:
    case ErrorKind::schema:
    case ErrorKind::simplex:
    case ErrorKind::duplicate:
      return 2;
    case ErrorKind::io:
      return 3;
    default:
      return 4;
    }
  }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

} // namespace stratfx
