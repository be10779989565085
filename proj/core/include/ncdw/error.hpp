#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ncdw {

enum class ErrorKind {
  usage,
  validation,
  range,
  capacity,
  invalid_name,
  key,
  parse,
  query,
  spec,
  lattice,
  undefined_correlation,
  insufficient_history,
  plan,
  mismatch,
  io,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure surfaced by the library carries a kind so the CLI can map it
// onto its exit-code contract without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// 1 usage, 2 data/validation, 3 I/O.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace ncdw
