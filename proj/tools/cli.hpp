#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hfsda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Full command line without the program name, e.g.
// {"--profile", "smoke", "train"}. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hfsda::cli
