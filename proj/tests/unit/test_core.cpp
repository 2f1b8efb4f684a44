// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <set>
#include <vector>

#include <doctest.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"
#include "safetune/core/parallel.hpp"
#include "safetune/core/rng.hpp"
#include "test_support.hpp"

using namespace safetune;

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(sha256_hex(std::string_view("abc")) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex(std::string_view("")) == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("derive_seed is deterministic and separates counters") {
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(7, {a, b}));
  CHECK(seen.size() == 400);
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  CHECK(derive_seed(1, {}) != derive_seed(2, {}));
  auto e1 = make_engine(5, {1});
  auto e2 = make_engine(5, {1});
  CHECK(e1() == e2());
}

TEST_CASE("float32 packing round-trips representable values") {
  const std::vector<double> v = {0.0, -1.5, 0.25, static_cast<float>(0.1), 1e30f};
  const auto bytes = pack_float32(v);
  CHECK(bytes.size() == 4 * v.size());
  CHECK(unpack_float32(bytes) == v);
  CHECK_THROWS(unpack_float32(std::string_view("abc")));
}

TEST_CASE("container encode and decode are inverse") {
  std::vector<TensorBlock> blocks = {{"a", {2, 2}, {1, 2, 3, 4}}, {"b", {3}, {0.5, -0.5, 8}}};
  const std::string bytes = encode_container({{"kind", "test"}}, blocks);
  const Container c = decode_container(bytes);
  CHECK(c.manifest.at("kind") == "test");
  REQUIRE(c.blocks.size() == 2);
  CHECK(c.block("a").values == blocks[0].values);
  CHECK(c.block("b").shape == blocks[1].shape);
  CHECK(c.has_block("b"));
  CHECK_FALSE(c.has_block("c"));
  CHECK_THROWS_AS(c.block("c"), Error);

  SUBCASE("truncation is detected") {
    CHECK_THROWS_AS(decode_container(bytes.substr(0, bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(decode_container(bytes.substr(0, 10)), FormatError);
  }
  SUBCASE("a flipped payload byte fails the hash check") {
    std::string bad = bytes;
    bad[bad.size() - 2] ^= 0x40;
    CHECK_THROWS_AS(decode_container(bad), FormatError);
  }
  SUBCASE("wrong magic is rejected") {
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_container(bad), FormatError);
  }
}

TEST_CASE("container files are written whole") {
  testing::TempDir dir("core");
  const auto path = dir / "sub/c.stck";
  write_container(path, {{"kind", "test"}}, {{"x", {1}, {2.0}}});
  CHECK(read_container(path).block("x").values == std::vector<double>{2.0});
  CHECK_FALSE(std::filesystem::exists(dir / "sub/c.stck.tmp"));
  CHECK_THROWS_AS(read_container(dir / "missing.stck"), Error);
}

TEST_CASE("parallel_for visits every index once") {
  for (int workers : {1, 3, 8}) {
    std::vector<std::atomic<int>> hits(100);
    parallel_for(hits.size(), workers, [&](std::size_t i) { hits[i]++; });
    for (auto& h : hits) CHECK(h.load() == 1);
  }
  std::vector<std::size_t> order;
  parallel_for(5, 1, [&](std::size_t i) { order.push_back(i); });
  CHECK(order == std::vector<std::size_t>{0, 1, 2, 3, 4});
}
