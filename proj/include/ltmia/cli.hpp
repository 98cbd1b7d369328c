#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ltmia::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Entry point shared by the executable and in-process tests. `args[0]` is
/// the program name. Returns 0 on success, 1 on data/validation errors and
/// 2 on usage errors. Data goes to files; progress lines go to `log`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log);

}  // namespace ltmia::cli
