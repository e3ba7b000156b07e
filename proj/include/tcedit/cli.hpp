#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tcedit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// Subcommands gen, train, eval, edit, gradcheck. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tcedit
