#pragma once

#include <iosfwd>

namespace poseprior {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDivergence = 3;

/// Entry point of the poseprior command. Machine-readable output goes to out,
/// diagnostics and the resolved configuration to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace poseprior
