#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mediqa::cli {

/// Runs one command line (without the program name). Results go to `out`;
/// failures print a single `error <kind>: <message>` line to `err` and
/// return nonzero.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mediqa::cli
