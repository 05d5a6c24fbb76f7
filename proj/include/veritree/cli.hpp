#pragma once

#include <string>
#include <vector>

namespace veritree {

/// Dispatch one CLI invocation (argv without the program name).
/// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace veritree
