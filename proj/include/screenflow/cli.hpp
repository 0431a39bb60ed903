#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace screenflow {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitUsage = 2 };

/// Entry point behind the `screenflow` binary. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace screenflow
