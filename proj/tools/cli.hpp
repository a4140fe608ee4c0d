#pragma once

namespace pvd::cli {

enum ExitCode { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Parses argv, runs one subcommand and maps failures to exit codes.
int dispatch(int argc, const char* const* argv);

/// Worker threads allowed by PVD_THREADS (default: hardware concurrency).
int thread_cap();

}  // namespace pvd::cli
