#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ape::cli {

enum ExitCode : int { kOk = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs the `ape` command line with argv-style arguments (args[0] is the
/// program name). Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ape::cli
