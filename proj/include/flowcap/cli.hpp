#pragma once

// Command-line front end. Exit codes: 0 ok, 1 internal error, 2 config
// error, 3 data error, 4 numeric error, 5 acceptance failure. Failures
// print {"error":{"kind":...,"message":...},"exit_code":n} on stderr.

#include <string>
#include <vector>

namespace flowcap {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;
inline constexpr int kExitAcceptance = 5;

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace flowcap
