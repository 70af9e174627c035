// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "edgeear/data.hpp"

namespace edgeear::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kReplayMismatch = 1;
inline constexpr int kConfigError = 2;
inline constexpr int kNumericError = 3;

// Runs one command line (without the program name). Normal output goes to
// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "synth:IDSxN" or "synth:IDSxN@OFFSET" builds the procedural set, with
// identities OFFSET.. and jitter seeded by `seed`; anything else is an image
// directory for load_dir. Throws ConfigError on a malformed spec.
std::vector<Sample> load_data(const std::string& spec, std::uint64_t seed, std::size_t image_size);

}  // namespace edgeear::cli
