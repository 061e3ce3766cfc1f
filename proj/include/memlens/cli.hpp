#pragma once

#include <ostream>

namespace memlens::cli {

inline constexpr int kExitClean = 0;
inline constexpr int kExitErrors = 1;
inline constexpr int kExitFailure = 2;

/// Entry point behind `memlens check <trace.jsonl> ...`. Diagnostics and
/// the summary line go to `err`; help text goes to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace memlens::cli
