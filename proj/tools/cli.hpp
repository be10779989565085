#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace ncdw::cli {

// Runs one command line (args[0] is the program name). Data goes to `out`,
// diagnostics to `err`. Returns 0 success, 1 usage, 2 data, 3 I/O.
int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace ncdw::cli
