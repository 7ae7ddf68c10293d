// Copyright (c) 2026, The Fuseformer Authors
// SPDX-License-Identifier: Apache-2.0
//
// The command-line interface as a library so that tests can drive it
// in-process. Exit codes: 0 success, 2 input or configuration error,
// 3 numerical divergence, 4 verification failure.

#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "fuseformer/data.hpp"

namespace fuseformer {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitDivergence = 3;
inline constexpr int kExitVerification = 4;

/// Parses `args` (without the program name), runs the subcommand and maps
/// errors to exit codes. Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Class statistics for counts given as proportions of a corpus of `total`
/// examples (positives rounded to the nearest integer).
ClassStats stats_from_proportions(std::span<const double> proportions, const std::vector<std::string>& names,
                                  std::size_t total = 10000);

} // namespace fuseformer
