// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace safetune {

/// A named float32 tensor stored in a container file.
struct TensorBlock {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> values;  // float32-representable
};

/// Parsed container: the caller's manifest fields plus the verified blocks.
struct Container {
  nlohmann::json manifest;
  std::vector<TensorBlock> blocks;

  const TensorBlock& block(const std::string& name) const;
  bool has_block(const std::string& name) const;
};

/// File layout:
///   "STCK" | u32 layout version | u64 manifest length | manifest JSON | blocks
/// The manifest carries a "blocks" array of {name, shape, offset, length, sha256}
/// with offsets relative to the first byte after the manifest. Blocks are raw
/// little-endian float32 in manifest order.
std::string encode_container(nlohmann::json manifest, const std::vector<TensorBlock>& blocks);
Container decode_container(const std::string& bytes);

void write_container(const std::filesystem::path& path, nlohmann::json manifest,
                     const std::vector<TensorBlock>& blocks);
Container read_container(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace safetune
