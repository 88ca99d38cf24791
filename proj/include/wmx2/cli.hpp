#pragma once

#include <string>
#include <vector>

namespace wmx2 {

// Exit codes: 0 success, 1 usage, 2 I/O, 3 format, 4 numeric failure.
int run_cli(int argc, const char* const* argv);

// Test-friendly entry point; args exclude the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace wmx2
