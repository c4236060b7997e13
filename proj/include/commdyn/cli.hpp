#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace commdyn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Runs one command line (args[0] is the program name). Returns 0 on success,
/// 1 on usage errors and 2 on data errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace commdyn
