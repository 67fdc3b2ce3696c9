#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace igsc::cli {

enum ExitCode : int {
    kOk = 0,
    kCheckFailed = 1,
    kUsage = 2,
    kNumeric = 3,
};

/// Runs one command line (args[0] is the program name). Normal output goes to `out`,
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace igsc::cli
