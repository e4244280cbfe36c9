#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace meshgen::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerification = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

// Runs one command line (without the program name). Human-readable output
// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace meshgen::cli
