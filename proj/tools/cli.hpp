#pragma once

#include <ostream>

namespace d3g::cli {

// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,   // bad flags, invalid config, unknown ids, empty inputs
  kIo = 2,      // missing/corrupt files, write failures
  kNumeric = 3, // non-finite loss, degenerate embeddings
};

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace d3g::cli
