#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "linrestrict/error.hpp"
#include "linrestrict/tensor.hpp"

namespace linrestrict::cli {

/// Exit codes of `run`.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitComputation = 2;

/// usage-error and query-error map to kExitUsage, every other code to
/// kExitComputation.
int exit_code_for(ErrorCode code);

/// "error[<code>]: <message>" on one line (newlines in the message are
/// replaced by spaces).
std::string diagnostic(ErrorCode code, std::string_view message);

/// Comma- or whitespace-separated floats. `what` names the source in errors.
std::vector<double> parse_values(std::string_view text, ErrorCode on_error,
                                 std::string_view what);

/// Worker count for sweep mode from LINRESTRICT_THREADS (unset means 1).
unsigned thread_count_from_env();

/// Runs one invocation; `args` excludes the program name. Results go to
/// `out` unless --out names a file, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace linrestrict::cli
