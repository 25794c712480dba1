#pragma once

#include <ostream>

namespace driu {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // verification or quality failure, divergence
inline constexpr int kExitUsage = 2;    // bad flags, config or input data

/// Entry point of the `driu` tool: train, infer, eval, synth and gradcheck
/// subcommands.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace driu
