#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pm {

/// Process exit codes of the `pm` tool.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitInput = 3,
    kExitRuntime = 4,
};

/// Runs the `pm` command line. `args` excludes the program name. Reports go
/// to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pm
