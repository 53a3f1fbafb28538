#pragma once

#include <iosfwd>

namespace triseg::cli {

/// Exit codes: 0 success, 1 usage, 2 data error, 3 runtime or numeric error.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kRuntime = 3 };

/// Runs one `triseg` invocation. Results go to `out`, logs and diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace triseg::cli
