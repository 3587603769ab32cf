// Copyright 2026 The repara_gap Authors
// SPDX-License-Identifier: Apache-2.0

#include "repara_gap/cli.hpp"

int main(int argc, char** argv)
{
    return repara_gap::run_cli(argc, argv);
}
