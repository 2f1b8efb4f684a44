// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <doctest.h>

#include "safetune/core/error.hpp"
#include "safetune/lora/lora_layer.hpp"
#include "test_support.hpp"

using namespace safetune;
using lora::LoraLayer;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(n(rng));
  return m;
}

}  // namespace

TEST_CASE("hand-computed forward") {
  // W0 = I, B = [1, 0]^T, A = [0, 1], alpha = r = 1, x = [0, 1]
  Eigen::MatrixXd up(2, 1), down(1, 2);
  up << 1, 0;
  down << 0, 1;
  const LoraLayer layer(Eigen::MatrixXd::Identity(2, 2), up, down, 1.0);
  const Eigen::VectorXd y = layer.forward(Eigen::Vector2d(0, 1));
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 1.0);
}

TEST_CASE("fresh init leaves the base map unchanged") {
  const Eigen::MatrixXd w0 = random_matrix(6, 9, 1);
  const auto layer = LoraLayer::init(w0, 3, std::nullopt, 42);
  CHECK(layer.up().isZero(0.0));
  CHECK(layer.merge() == w0);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd x = testing::random_vector(9, rng);
    CHECK(layer.forward(x) == w0 * x);
  }
  CHECK(layer.scaling() == 1.0);
  CHECK(layer.trainable_size() == 3 * (6 + 9));
}

TEST_CASE("rank bounds are enforced") {
  const Eigen::MatrixXd w0 = random_matrix(4, 6, 2);
  CHECK_THROWS_AS(LoraLayer::init(w0, 4, std::nullopt, 0), InvalidArgument);
  CHECK_THROWS_AS(LoraLayer::init(w0, 0, std::nullopt, 0), InvalidArgument);
  CHECK_NOTHROW(LoraLayer::init(w0, 3, std::nullopt, 0));
}

TEST_CASE("init is deterministic in the seed") {
  const Eigen::MatrixXd w0 = random_matrix(5, 7, 3);
  CHECK(LoraLayer::init(w0, 2, 4.0, 9).down() == LoraLayer::init(w0, 2, 4.0, 9).down());
  CHECK(LoraLayer::init(w0, 2, 4.0, 9).down() != LoraLayer::init(w0, 2, 4.0, 10).down());
}

TEST_CASE("merged weight reproduces the adapted forward") {
  const LoraLayer layer(random_matrix(5, 7, 4), random_matrix(5, 2, 5), random_matrix(2, 7, 6), 3.0);
  const Eigen::MatrixXd merged = layer.merge();
  CHECK(merged == layer.merge());
  std::mt19937_64 rng(7);
  for (int i = 0; i < 20; ++i) {
    const Eigen::VectorXd x = testing::random_vector(7, rng);
    CHECK((merged * x - layer.forward(x)).cwiseAbs().maxCoeff() <= 1e-6);
  }
  // The oracle for the merge itself: W0 + (alpha / r) B A.
  CHECK((merged - (layer.base() + 1.5 * layer.up() * layer.down())).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("factor gradients match finite differences") {
  LoraLayer layer(random_matrix(4, 5, 8), random_matrix(4, 2, 9), random_matrix(2, 5, 10), 2.0);
  std::mt19937_64 rng(11);
  const Eigen::VectorXd x = testing::random_vector(5, rng);
  const Eigen::VectorXd g = testing::random_vector(4, rng);  // L = g . forward(x)
  Eigen::MatrixXd gb = Eigen::MatrixXd::Zero(4, 2), ga = Eigen::MatrixXd::Zero(2, 5);
  layer.accumulate_gradient(g, x, gb, ga);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < layer.up().size(); ++i) {
    const double keep = layer.up().data()[i];
    layer.up().data()[i] = keep + h;
    const double plus = g.dot(layer.forward(x));
    layer.up().data()[i] = keep - h;
    const double minus = g.dot(layer.forward(x));
    layer.up().data()[i] = keep;
    CHECK(gb.data()[i] == doctest::Approx((plus - minus) / (2 * h)).epsilon(1e-6));
  }
  for (Eigen::Index i = 0; i < layer.down().size(); ++i) {
    const double keep = layer.down().data()[i];
    layer.down().data()[i] = keep + h;
    const double plus = g.dot(layer.forward(x));
    layer.down().data()[i] = keep - h;
    const double minus = g.dot(layer.forward(x));
    layer.down().data()[i] = keep;
    CHECK(ga.data()[i] == doctest::Approx((plus - minus) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("adapter files hold factors only and check the base") {
  testing::TempDir dir("lora");
  const Eigen::MatrixXd base = random_matrix(4, 6, 12);
  const LoraLayer layer(base, random_matrix(4, 2, 13), random_matrix(2, 6, 14), 2.0);
  lora::save_adapter(dir / "a.stck", {{"mean", layer}});
  const auto back = lora::load_adapter(dir / "a.stck", {{"mean", base}});
  REQUIRE(back.size() == 1);
  CHECK(back[0].layer.up() == layer.up());
  CHECK(back[0].layer.down() == layer.down());
  CHECK(back[0].layer.alpha() == 2.0);

  Eigen::MatrixXd other = base;
  other(0, 0) += 1.0;
  CHECK_THROWS_AS(lora::load_adapter(dir / "a.stck", {{"mean", other}}), Error);
  CHECK_THROWS_AS(lora::load_adapter(dir / "a.stck", {}), Error);
}
