#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace icc::cli {

/// Exit codes: 0 ok, 1 usage, 2 format, 3 validation, 4 computation.
/// `args` excludes the program name.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace icc::cli
