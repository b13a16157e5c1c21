#pragma once

#include <iosfwd>

namespace chainnet::cli {

// Exit codes: 0 success, 1 usage or configuration error, 2 runtime error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace chainnet::cli
