#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace crossed::cli {

// Runs one CLI invocation; `args` excludes the program name. Exit codes:
// 0 success, 1 error, 2 fit succeeded on a degenerate design.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Shard default: CROSSED_LMM_THREADS if set, else the hardware thread count.
std::size_t default_shards();

}  // namespace crossed::cli
