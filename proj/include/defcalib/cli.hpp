#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace defcalib::cli {

enum ExitCode : int {
  kOk = 0,
  kUsageError = 1,      // bad flags or configuration
  kDataError = 2,       // unreadable or invalid input data
  kNumericalError = 3,  // calibration failed on the full (non-subset) path
};

// Entry point of the command-line tool. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace defcalib::cli
