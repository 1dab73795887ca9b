#pragma once

#include <string>
#include <vector>

namespace ct {

// Dispatches one CLI invocation (argv without the program name).
// Exit codes: 0 success, 1 module failure, 2 usage error.
int run_command(const std::vector<std::string>& args);

}  // namespace ct
