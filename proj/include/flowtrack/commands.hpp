#pragma once

#include <string>
#include <vector>

namespace flowtrack {

/// Entry point shared by the CLI binary and in-process tests. `args` is
/// argv without the program name: subcommand first, then flags. Returns a
/// process exit code; never throws (errors are printed to stderr).
int run_cli(const std::vector<std::string>& args);

/// printf-style helper: runs run_cli on a whitespace-split command line.
int run_cli_line(const std::string& line);

}  // namespace flowtrack
