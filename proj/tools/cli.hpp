#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mobe::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kNumeric = 3 };

/// Runs one command line (without the program name). Machine-readable
/// summaries go to `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mobe::cli
