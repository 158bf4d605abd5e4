#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sccv::cli {

enum ExitCode { kOk = 0, kValidation = 1, kSolver = 2 };

// Parses argv, runs one subcommand and returns its exit code. Logging goes
// to stderr at the CVX_LOG level, the one-line summary to stdout.
int run(int argc, const char* const* argv);
// Same, with the summary line written to `summary`.
int run(const std::vector<std::string>& args, std::ostream& summary);

}  // namespace sccv::cli
