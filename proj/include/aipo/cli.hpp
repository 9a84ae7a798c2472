// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace aipo {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitIo = 3, kExitNumeric = 4 };

/// Runs the command-line tool with args (program name excluded). Failures
/// print one "error: <code>: <detail>" line to err and return the exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace aipo
