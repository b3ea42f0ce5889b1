#pragma once

#include <stdexcept>
#include <string>

namespace slm {

// Bad input data or parameters supplied by the caller.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training could not complete (numerical failure, no usable projections).
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed model document.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
[[noreturn]] inline void fail_argument(const std::string& what) { throw InvalidArgument(what); }
inline void require(bool cond, const char* what) {
  if (!cond) fail_argument(what);
}
}  // namespace detail

}  // namespace slm
