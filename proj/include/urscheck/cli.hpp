#pragma once

#include <iosfwd>

namespace urscheck {

/// Exit codes of `urscheck test`; the other commands use 0 and kExitConfig.
inline constexpr int kExitConsistent = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRejected = 2;
inline constexpr int kExitIndeterminate = 3;

/// Entry point of the urscheck command line (generate, count, sample, test,
/// report). Output goes to `out`, diagnostics to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace urscheck
