// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace safetune {

/// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);
std::string sha256_hex(std::span<const std::uint8_t> bytes);

/// 64-bit FNV-1a, used for cheap deterministic token hashing.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Packs values as little-endian IEEE-754 float32.
std::string pack_float32(std::span<const double> values);
std::vector<double> unpack_float32(std::string_view bytes);

}  // namespace safetune
