#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mret {

/// Runs one `mret` subcommand (train, score, eval, inspect, counts, synth).
/// `args` excludes the program name. Results go to `out` as JSON; failures
/// print a single-line {"error": ...} to `err`. Returns the process exit code:
/// 0 on success, 1 on configuration or data errors, 2 on training divergence.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mret
