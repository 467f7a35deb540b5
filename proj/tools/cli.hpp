#pragma once

#include <iosfwd>

namespace compglm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitNumerical = 2;

inline constexpr const char* kSchemaVersion = "compglm/1";

/// Runs the command line. Error reports (JSON) go to `out`; help and usage
/// text go to `out` as well, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace compglm::cli
