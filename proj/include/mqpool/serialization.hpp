// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The mqpool Authors
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"
#include "mqpool/pooling.hpp"

namespace mqpool {

using json = nlohmann::json;

std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

/// Pooling config with scorer tensors embedded as base64 MQT1 blobs.
json pooling_to_json(const PoolingConfig& cfg);
/// Same, but each scorer tensor is written to `dir/<prefix><name>.mqt`
/// and referenced by relative file name.
json pooling_to_json(const PoolingConfig& cfg, const std::filesystem::path& dir,
                     const std::string& prefix);
/// Accepts either weight encoding; file references resolve against base_dir.
PoolingConfig pooling_from_json(const json& j, const std::filesystem::path& base_dir = {});

/// Throws ConfigError naming the first key of `j` outside `allowed`.
void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         std::string_view context);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace mqpool
