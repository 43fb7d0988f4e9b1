#pragma once

#include <iosfwd>

namespace twinforge::cli {

/// Exit codes: 0 success, 1 data-level failures present, 2 usage or config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDataFailure = 1;
inline constexpr int kExitUsage = 2;

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace twinforge::cli
