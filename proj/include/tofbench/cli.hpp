#pragma once

// The tofbench command line. Exit codes: 0 success, 1 usage, 2 data,
// 3 I/O, 4 network.

#include <iosfwd>
#include <string>
#include <vector>

namespace tofbench::cli {

/// Runs one command. `args` excludes the program name.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

/// The reduction script written next to generated powder runs.
std::string reference_script();

} // namespace tofbench::cli
