#pragma once

#include <ostream>

#include "pdlopt/error.hpp"

namespace pdlopt {

/// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,   // configuration, usage or program errors
  kExitBackend = 2,  // model backend, search or sandbox unavailable
  kExitData = 3,     // missing or malformed input files
};

int exit_code_for(ErrorCode code) noexcept;

/// Entry point of `pdlopt optimize|evaluate|run|trajectories`. Results go to
/// `out` as machine-readable lines; diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pdlopt
