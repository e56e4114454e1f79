#pragma once

#include <exception>
#include <ostream>
#include <string>
#include <vector>

namespace cot2::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kUsage = 2,
  kMissingInput = 3,
  kConfig = 4,
  kNumeric = 5,
  kData = 6,
  kInvariant = 7,
};

/// Machine-readable name and exit code of an exception raised by a verb.
std::pair<const char*, int> classify_error(const std::exception& e);

/// `error: code=<name> message="<escaped>"`
std::string error_line(const char* code, const std::string& message);

/// Entry point behind the executable: args[0] is the program name. Progress
/// goes to `log`, the error line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& log, std::ostream& err);

const char* code_version();

}  // namespace cot2::cli
