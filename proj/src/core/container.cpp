// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/core/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"

namespace safetune {

namespace {

constexpr char kMagic[4] = {'S', 'T', 'C', 'K'};
constexpr std::uint32_t kLayoutVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t pos) {
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  return v;
}

std::int64_t element_count(const std::vector<std::int64_t>& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

}  // namespace

const TensorBlock& Container::block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return b;
  throw FormatError(fmt::format("container has no block named '{}'", name));
}

bool Container::has_block(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return true;
  return false;
}

std::string encode_container(nlohmann::json manifest, const std::vector<TensorBlock>& blocks) {
  std::string payload;
  auto entries = nlohmann::json::array();
  for (const auto& b : blocks) {
    if (element_count(b.shape) != static_cast<std::int64_t>(b.values.size())) {
      throw InvalidArgument(fmt::format("block '{}' shape does not match its value count", b.name));
    }
    std::string bytes = pack_float32(b.values);
    entries.push_back({{"name", b.name},
                       {"shape", b.shape},
                       {"offset", payload.size()},
                       {"length", bytes.size()},
                       {"sha256", sha256_hex(bytes)}});
    payload += bytes;
  }
  manifest["blocks"] = std::move(entries);
  const std::string text = manifest.dump();

  std::string out(kMagic, 4);
  put<std::uint32_t>(out, kLayoutVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  out += payload;
  return out;
}

Container decode_container(const std::string& bytes) {
  constexpr std::size_t kHeader = 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (bytes.size() < kHeader || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a safetune container (bad magic or truncated header)");
  }
  const auto layout = get<std::uint32_t>(bytes, 4);
  if (layout != kLayoutVersion) {
    throw FormatError(fmt::format("unsupported container layout version {} (expected {})", layout, kLayoutVersion));
  }
  const auto manifest_len = get<std::uint64_t>(bytes, 8);
  if (bytes.size() - kHeader < manifest_len) throw FormatError("container manifest is truncated");

  Container c;
  try {
    c.manifest = nlohmann::json::parse(bytes.substr(kHeader, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("container manifest is not valid JSON: {}", e.what()));
  }
  const std::size_t base = kHeader + manifest_len;
  for (const auto& entry : c.manifest.at("blocks")) {
    TensorBlock b;
    b.name = entry.at("name").get<std::string>();
    b.shape = entry.at("shape").get<std::vector<std::int64_t>>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const auto length = entry.at("length").get<std::size_t>();
    const auto expected = entry.at("sha256").get<std::string>();
    std::string slice = base + offset <= bytes.size() ? bytes.substr(base + offset, length) : std::string();
    if (slice.size() != length || sha256_hex(slice) != expected) {
      throw FormatError(fmt::format("content hash mismatch for block '{}' (file truncated or corrupted)", b.name));
    }
    if (static_cast<std::int64_t>(length / sizeof(float)) != element_count(b.shape)) {
      throw FormatError(fmt::format("block '{}' length does not match its shape", b.name));
    }
    b.values = unpack_float32(slice);
    c.blocks.push_back(std::move(b));
  }
  return c;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write beside the target and rename, so readers never see a partial file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw Error(fmt::format("short write to '{}'", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

void write_container(const std::filesystem::path& path, nlohmann::json manifest,
                     const std::vector<TensorBlock>& blocks) {
  write_file(path, encode_container(std::move(manifest), blocks));
}

Container read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

}  // namespace safetune
