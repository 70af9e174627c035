// Copyright 2026 The EdgeEar Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace edgeear {

// A small TOML subset: top-level keys, one level of [section] tables, and
// values that are strings, integers, floats, booleans or arrays of those.
// Throws ConfigError with "<source>:<line>: ..." on anything else.
nlohmann::json parse_toml(std::string_view text, const std::string& source = "<string>");

// JSON when the file ends in .json, TOML otherwise. Throws LoadError when the
// file cannot be read and ConfigError when it does not parse.
nlohmann::json load_config_file(const std::filesystem::path& path);

}  // namespace edgeear
