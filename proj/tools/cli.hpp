// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace avattn::cli {

/// Version identifier recorded in every output directory.
std::string VersionId();

/// Runs one subcommand. `args` excludes the program name. Returns the exit
/// code; failures print a one-line reason to `err`.
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace avattn::cli
