#pragma once

#include <iosfwd>

namespace crossrank::cli {

// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,     // bad flags, config, scenario or input
  kBackend = 2,   // backend, quorum or simulation failure
  kFlagged = 3,   // strict mode and at least one outlier flag
};

// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::istream& in, std::ostream& out,
        std::ostream& err);

}  // namespace crossrank::cli
