#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sis {

/// Full CLI entry point, minus the program name. Testable in-process: never
/// calls exit, never touches global state. Returns the process exit code:
/// 0 success, 1 usage, 2 data, 3 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace sis
