// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace safetune::policy {

enum class PromptTag { benign, unsafe, unknown };

std::string_view to_string(PromptTag tag);
PromptTag parse_prompt_tag(std::string_view s);

struct PromptContext {
  std::string text;
  Eigen::VectorXd embedding;
  PromptTag tag = PromptTag::unknown;
};

/// Channel-major (C, H, W) layout shared by latents and images.
struct LatentShape {
  int channels = 1;
  int height = 8;
  int width = 8;

  int size() const { return channels * height * width; }
  int index(int c, int h, int w) const { return (c * height + h) * width + w; }
  friend bool operator==(const LatentShape&, const LatentShape&) = default;
};

struct LatentState {
  Eigen::VectorXd values;
  int timestep = 0;
};

/// A denoising chain, ordered from the first noisy state down to t = 0.
/// Full text-to-image trajectories start at t = T; image-to-image ones start
/// at t_start < T. `step_log_probs[i]` scores the move states[i] -> states[i+1].
struct Trajectory {
  PromptContext context;
  std::vector<LatentState> states;
  std::vector<double> step_log_probs;
  std::uint64_t seed = 0;

  const LatentState& final_state() const { return states.back(); }
  int num_steps() const { return static_cast<int>(step_log_probs.size()); }
  double total_log_prob() const;
};

/// Pixel intensities in [0, 1], same layout as LatentShape.
struct Image {
  LatentShape shape;
  Eigen::VectorXd pixels;

  double at(int c, int h, int w) const { return pixels[shape.index(c, h, w)]; }
  /// float32 little-endian pixel bytes; the identity used for hashing.
  std::string bytes() const;
};

/// Deterministic binary encoding. Two trajectories serialize to the same bytes
/// iff every stored value is bitwise equal.
std::string serialize(const Trajectory& trajectory);

}  // namespace safetune::policy
