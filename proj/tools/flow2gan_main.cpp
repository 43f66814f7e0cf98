// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#include "flow2gan/cli/cli.hpp"

int main(int argc, char** argv) { return flow2gan::cli::run(argc, argv); }
