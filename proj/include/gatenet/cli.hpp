#pragma once

#include <string>
#include <vector>

namespace gatenet {

// Batch CLI: eval, infer, train-toy, gates, selfcheck.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace gatenet
