#pragma once

#include <string>
#include <vector>

namespace sslcal {

// Entry point shared by the binary and the tests.
// Exit codes: 0 success, 1 input error, 2 configuration/usage error.
int run_cli(const std::vector<std::string>& args);

}  // namespace sslcal
