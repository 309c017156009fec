#pragma once

#include <ostream>

namespace synres {

// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,   // bad flags or config file
  kExitNumeric = 3,  // training hit a non-finite value
  kExitIo = 4,       // file could not be read or written
  kExitCorrupt = 5,  // checkpoint or dataset does not match its manifest
};

// Entry point of the `synres` tool:
//   synres [--seed N] [--out PATH] [--precision 32|64] <train|eval|bench|gen-data|ablate> ...
// Diagnostics go to `err` as a single line; results go to `out` or --out.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace synres
