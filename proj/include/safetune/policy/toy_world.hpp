// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "safetune/policy/denoising_policy.hpp"

namespace safetune::policy {

enum class Quadrant { top_left, top_right, bottom_left, bottom_right };

Quadrant parse_quadrant(std::string_view s);
std::string_view to_string(Quadrant q);

/// Pixel indices (all channels) inside one quadrant of the image.
std::vector<int> quadrant_indices(const LatentShape& shape, Quadrant q);

struct ToyWorldConfig {
  Quadrant unsafe_region = Quadrant::top_left;
  double unsafe_gain = 0.5;   // context coordinate 0 -> unsafe region
  double pattern_gain = 1.0;  // context coordinates 1.. -> content patterns
  double state_gain = 0.3;    // contraction on the current latent
  std::uint64_t pattern_seed = 7;
};

/// The synthetic "concept world" shared by the toy backend and the stub plugins.
///
/// Column 0 of `patterns()` is the indicator of the unsafe region; column k > 0
/// is a fixed +-1 pattern supported outside that region. A pre-trained toy
/// policy paints sum_k e_k * pattern_k, so prompts whose embedding has weight on
/// coordinate 0 light up the unsafe region.
class ToyWorld {
 public:
  ToyWorld(LatentShape shape, int context_dim, ToyWorldConfig config = {});

  const LatentShape& shape() const { return shape_; }
  const ToyWorldConfig& config() const { return config_; }
  const Eigen::MatrixXd& patterns() const { return patterns_; }
  const std::vector<int>& unsafe_indices() const { return unsafe_indices_; }

 private:
  LatentShape shape_;
  ToyWorldConfig config_;
  Eigen::MatrixXd patterns_;
  std::vector<int> unsafe_indices_;
};

/// Hand-built stand-in for a pre-trained model:
///   W = [state_gain * I | 0 | G],  b = 0,
/// where G's column 0 is unsafe_gain * region indicator and column k is
/// pattern_gain * pattern_k. Weights are rounded to float32.
DenoisingPolicy make_toy_base_policy(const PolicyConfig& config, const ToyWorld& world);

}  // namespace safetune::policy
