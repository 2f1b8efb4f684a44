// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/core/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <bit>
#include <cstring>

#include "safetune/core/error.hpp"

namespace safetune {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 digest failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

static_assert(std::endian::native == std::endian::little, "float32 blocks assume a little-endian host");

std::string pack_float32(std::span<const double> values) {
  std::string out(values.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float f = static_cast<float>(values[i]);
    std::memcpy(out.data() + i * sizeof(float), &f, sizeof(float));
  }
  return out;
}

std::vector<double> unpack_float32(std::string_view bytes) {
  if (bytes.size() % sizeof(float) != 0) throw FormatError("float32 block length is not a multiple of 4");
  std::vector<double> out(bytes.size() / sizeof(float));
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    out[i] = f;
  }
  return out;
}

}  // namespace safetune
