// Copyright 2026 the flow2gan authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace flow2gan {

/// Bad or inconsistent configuration (unknown preset, invalid hyperparameter).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed caller input (shape mismatch, empty signal, bad length).
struct InputError : std::runtime_error {
  explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numeric precondition failed at runtime (non-finite loss, domain violation).
struct DomainError : std::runtime_error {
  explicit DomainError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File or stream failure (missing file, truncated checkpoint, bad magic).
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace flow2gan
