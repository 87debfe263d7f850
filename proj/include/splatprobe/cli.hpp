#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace splatprobe {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumerical = 3 };

/// Runs one command line (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

/// Worker count from SPLATPROBE_THREADS, or 1.
int default_threads();

}  // namespace splatprobe
