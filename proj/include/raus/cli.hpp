#pragma once

#include <iosfwd>

namespace raus {

// Entry point for the `raus` tool. Returns the process exit status: 0 on
// success, 2 for configuration errors, 3 for data and IO errors, 1 otherwise.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace raus
