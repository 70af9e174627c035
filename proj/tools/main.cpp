// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) {
  return edgeear::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
