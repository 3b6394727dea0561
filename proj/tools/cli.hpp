#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eblup::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kNoConvergence = 2,
  kInputError = 3,
  kSingularInformation = 4,
};

// Runs one command line (args[0] is the program name). Reports go to `out`;
// failures put a single JSON error object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eblup::cli
