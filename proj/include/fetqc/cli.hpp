#pragma once

#include <ostream>

namespace fetqc {

inline constexpr const char* kVersion = "1.0.0";

/// Exit codes of `dispatch`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;  // usage errors, invalid inputs or configuration
inline constexpr int kExitRuntime = 2;     // failures while running

/// Runs one subcommand of the `fetqc` tool. Every run writes a JSON log next to its output
/// (or at --log) with versions, seeds and the resolved configuration.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fetqc
