// SPDX-FileCopyrightText: (c) 2026 The avattn Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return avattn::cli::Run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
