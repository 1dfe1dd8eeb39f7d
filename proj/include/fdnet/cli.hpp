#pragma once

// Batch front end. Exit status: 0 success, 1 domain error (or failed
// verification), 2 usage error. Results are JSON on stdout or --output;
// human-readable progress goes to stderr.

#include <string>
#include <vector>

namespace fdnet::cli {

int run(int argc, const char* const* argv);
/// args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace fdnet::cli
