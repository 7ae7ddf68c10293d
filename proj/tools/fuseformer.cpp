// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "fuseformer/commands.hpp"

int main(int argc, char** argv) {
    return fuseformer::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
