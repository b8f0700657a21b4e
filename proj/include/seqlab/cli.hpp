#pragma once

#include <ostream>
#include <span>
#include <string>

namespace seqlab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point behind the `seqlab` executable. `args` excludes the program
/// name. Returns the process exit code.
int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace seqlab
