#pragma once

// Command dispatch of the srf tool. Commands: validate, heat, dual-heat,
// wdist, geodesic, bochner, verify, poincare, export.
//
// Exit codes: 0 pass, 1 violation found, 2 input or validation error,
// 3 numerical failure (including inconclusive verdicts).

#include <ostream>
#include <string>
#include <vector>

namespace srf {

enum ExitCode : int {
  exit_pass = 0,
  exit_violation = 1,
  exit_input_error = 2,
  exit_numerical_failure = 3,
};

/// Runs one command; args excludes the program name. Reports go to out,
/// error messages to err, and artifacts to --out DIR when given.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace srf
