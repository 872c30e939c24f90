#pragma once

#include <string>
#include <vector>

namespace mosquito::cli {

// Runs one command line (program name excluded) and returns the exit code:
// 0 on success, 1 when the operation ran but its result is a failure
// (incomplete session, undecodable payload), 2 on usage, config or I/O errors.
int run(const std::vector<std::string>& args);

} // namespace mosquito::cli
