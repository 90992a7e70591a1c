#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace wd::cli {

/// Runs one subcommand; args excludes the program name. Returns the exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wd::cli
