#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vipcap::cli {

enum ExitCode : int {
    kSuccess = 0,
    kUsage = 1,
    kDataError = 2,
    kNumericError = 3,
};

/// Runs one `vipcap` invocation. `args` excludes the program name. Primary
/// output goes to `out`, usage and error text to `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vipcap::cli
