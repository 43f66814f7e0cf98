// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace flow2gan::cli {

/// Dispatches one subcommand. Returns 0 on success, 1 on usage/config
/// errors, 2 on runtime failures. All diagnostics go to stderr.
int run(int argc, const char* const* argv);

/// Same, from pre-split arguments (excluding the program name).
int run(const std::vector<std::string>& args);

}  // namespace flow2gan::cli
