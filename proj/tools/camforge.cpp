// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#include "camforge/cli.hpp"

int main(int argc, char** argv) { return camforge::cli_main(argc, argv); }
