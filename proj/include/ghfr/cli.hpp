#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ghfr {

/// Runs one `ghfr` subcommand (args excludes the program name). Returns the
/// process exit status; failures are reported on `err` naming the stage.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ghfr
