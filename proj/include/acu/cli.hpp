#pragma once

#include <ostream>

namespace acu {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `acu` tool. Subcommands: gradcheck, equivcheck, count,
/// train, export-positions, lower. Returns 0 on success, 1 on a runtime or
/// check failure, 2 on a usage error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace acu
