// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace softtopic::cli {

/// Runs the `softtopic` command line. Returns the process exit code:
/// 0 on success, 1 for a failed command, 2 for a usage error. Failures
/// print a single `error: <category>: <message>` line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace softtopic::cli
