#pragma once

#include <string>
#include <vector>

namespace prefgen::cli {

// Full command-line entry point; returns the process exit code.
// Exit codes: 0 success, 2 invalid config, 3 missing checkpoint dependency,
// 4 runtime numerical failure, 1 other errors.
int run(const std::vector<std::string>& args);

}  // namespace prefgen::cli
