#pragma once

#include <string>
#include <vector>

namespace rbs::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitRuntime = 4;

/// Replaces "--config <file>" (or "--config=<file>") by the flags the JSON file
/// holds, inserted right after the subcommand so later command-line flags win.
/// Keys map to long flags ("batch_cap" and "batch-cap" both give --batch-cap);
/// arrays become comma-separated values, true becomes a bare flag, false is dropped.
/// Throws rbs::ArgumentError for unreadable files, non-object JSON or nested objects.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

/// Entry point for the rbs executable; args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace rbs::cli
