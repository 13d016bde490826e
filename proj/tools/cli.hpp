// Copyright (C) 2026 lim contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lim::cli {

/// Runs the `lim` command line. args[0] is the program name. Reports go to
/// --out (or `out`); failures print one JSON error object to `err`.
/// Returns 0 only when every output was written.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace lim::cli
