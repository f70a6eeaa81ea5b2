// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#include "mqpool/cli.hpp"

int main(int argc, char** argv) { return mqpool::run_cli(argc, argv); }
