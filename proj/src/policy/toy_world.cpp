// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/policy/toy_world.hpp"

#include <algorithm>
#include <random>

#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/core/rng.hpp"

namespace safetune::policy {

Quadrant parse_quadrant(std::string_view s) {
  if (s == "top_left") return Quadrant::top_left;
  if (s == "top_right") return Quadrant::top_right;
  if (s == "bottom_left") return Quadrant::bottom_left;
  if (s == "bottom_right") return Quadrant::bottom_right;
  throw InvalidArgument(fmt::format("unknown quadrant '{}'", s));
}

std::string_view to_string(Quadrant q) {
  switch (q) {
    case Quadrant::top_left: return "top_left";
    case Quadrant::top_right: return "top_right";
    case Quadrant::bottom_left: return "bottom_left";
    case Quadrant::bottom_right: return "bottom_right";
  }
  return "top_left";
}

std::vector<int> quadrant_indices(const LatentShape& shape, Quadrant q) {
  const int h0 = (q == Quadrant::bottom_left || q == Quadrant::bottom_right) ? shape.height / 2 : 0;
  const int w0 = (q == Quadrant::top_right || q == Quadrant::bottom_right) ? shape.width / 2 : 0;
  const int h1 = h0 == 0 ? std::max(1, shape.height / 2) : shape.height;
  const int w1 = w0 == 0 ? std::max(1, shape.width / 2) : shape.width;
  std::vector<int> out;
  for (int c = 0; c < shape.channels; ++c)
    for (int h = h0; h < h1; ++h)
      for (int w = w0; w < w1; ++w) out.push_back(shape.index(c, h, w));
  return out;
}

ToyWorld::ToyWorld(LatentShape shape, int context_dim, ToyWorldConfig config)
    : shape_(shape), config_(config), unsafe_indices_(quadrant_indices(shape, config.unsafe_region)) {
  if (context_dim < 1) throw InvalidArgument("toy world needs context_dim >= 1");
  const int d = shape_.size();
  patterns_ = Eigen::MatrixXd::Zero(d, context_dim);
  std::vector<bool> in_region(static_cast<std::size_t>(d), false);
  for (int i : unsafe_indices_) {
    in_region[static_cast<std::size_t>(i)] = true;
    patterns_(i, 0) = 1.0;
  }
  Engine engine = make_engine(config_.pattern_seed, {0x9a77});
  std::bernoulli_distribution coin(0.5);
  for (int k = 1; k < context_dim; ++k)
    for (int i = 0; i < d; ++i)
      if (!in_region[static_cast<std::size_t>(i)]) patterns_(i, k) = coin(engine) ? 1.0 : -1.0;
}

DenoisingPolicy make_toy_base_policy(const PolicyConfig& config, const ToyWorld& world) {
  if (!(world.shape() == config.shape) || world.patterns().cols() != config.context_dim) {
    throw InvalidArgument("toy world does not match the policy configuration");
  }
  config.validate();
  const int d = config.shape.size();
  const auto& wc = world.config();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d, d + 1 + config.context_dim);
  w.leftCols(d).diagonal().setConstant(wc.state_gain);
  Eigen::MatrixXd g = world.patterns();
  g.col(0) *= wc.unsafe_gain;
  g.rightCols(config.context_dim - 1) *= wc.pattern_gain;
  w.rightCols(config.context_dim) = g;
  DenoisingPolicy out(config, std::move(w), Eigen::VectorXd::Zero(d));
  out.round_to_float32();
  return out;
}

}  // namespace safetune::policy
