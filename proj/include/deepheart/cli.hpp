#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace deepheart::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Runs one subcommand. Returns 0 on success, 1 on usage errors, 2 on data
// errors and 3 when a non-finite value aborted a computation.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace deepheart::cli
