#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pedmr::cli {

// Runs the command line tool. Log lines (JSON, one per line) go to `log`.
// Returns 0 on success, 1 on a runtime failure, 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& log);

// Convenience for tests: args exclude the program name.
int run(const std::vector<std::string>& args, std::ostream& log);

}  // namespace pedmr::cli
