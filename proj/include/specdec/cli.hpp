#pragma once

// Entry point of the specdec-lab command-line tool. Subcommands and flags are
// documented in docs/cli.md.
//
// Exit codes: 0 success, 1 a check reported failure (perfmodel --crosscheck),
// 2 usage or configuration error, 3 numerical failure.

#include <iosfwd>
#include <string>
#include <vector>

namespace specdec {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;

/// `args` excludes the program name. Diagnostics go to `err`, progress and
/// summaries to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace specdec
