#pragma once

#include <ostream>

namespace rknn::cli {

enum ExitCode : int { kSuccess = 0, kValidation = 1, kRuntime = 2 };

// Parses argv, dispatches the subcommand and maps failures to an exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace rknn::cli
