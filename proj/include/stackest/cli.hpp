#pragma once

#include <iosfwd>

namespace stackest::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kParse = 3,
  kConvergence = 4,
  kPositivity = 5,
};

// Entry point of the `stackest` command; writes reports to `out` and
// diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stackest::cli
