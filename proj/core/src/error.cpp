#include "ncdw/error.hpp"

namespace ncdw {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::validation: return "validation";
    case ErrorKind::range: return "range";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::invalid_name: return "invalid-name";
    case ErrorKind::key: return "key";
    case ErrorKind::parse: return "parse";
    case ErrorKind::query: return "query";
    case ErrorKind::spec: return "spec";
    case ErrorKind::lattice: return "lattice";
    case ErrorKind::undefined_correlation: return "undefined-correlation";
    case ErrorKind::insufficient_history: return "insufficient-history";
    case ErrorKind::plan: return "plan";
    case ErrorKind::mismatch: return "mismatch";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return 1;
    case ErrorKind::io: return 3;
    default: return 2;
  }
}

}  // namespace ncdw
