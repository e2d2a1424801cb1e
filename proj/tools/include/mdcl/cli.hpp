#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mdcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point of the `mdcl` tool. Subcommands: make-toy, train, translate, evaluate.
/// Returns 0 on success, 1 on runtime failure and 2 on usage errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience overload for tests; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdcl::cli
