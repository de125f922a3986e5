#pragma once

#include <iosfwd>

namespace cape::cli {

inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitIo = 4;

/// Parses argv, runs one subcommand and maps errors to exit codes. Errors
/// are reported as a single `error[<kind>]: <message>` line on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cape::cli
