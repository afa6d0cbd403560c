#pragma once

#include <string>
#include <vector>

namespace mimatch {

// Entry point behind the command-line binary; returns the process exit code
// (0 success, 1 usage error, 2 runtime failure).
int run_cli(const std::vector<std::string>& args);

}  // namespace mimatch
