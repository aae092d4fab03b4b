#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace csconf::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kFitInfeasible = 3,
};

// Entry point shared by the binary and the tests. `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace csconf::cli
