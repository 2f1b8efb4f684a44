// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

#include "safetune/lora/lora_layer.hpp"
#include "safetune/policy/types.hpp"

namespace safetune::policy {

enum class MeanActivation { tanh, linear };

MeanActivation parse_mean_activation(std::string_view s);
std::string_view to_string(MeanActivation a);

struct PolicyConfig {
  LatentShape shape{};
  int num_steps = 10;
  // Per-step noise scale, linear in t: sigma(1) = sigma_min, sigma(T) = sigma_max.
  double sigma_min = 0.3;
  double sigma_max = 1.0;
  int context_dim = 8;
  // mean = mean_scale * act(W [x; t/T; c] + b)
  double mean_scale = 2.0;
  MeanActivation activation = MeanActivation::tanh;
  // pixel = clamp(0.5 + decode_scale * latent, 0, 1)
  double decode_scale = 0.25;

  void validate() const;
};

/// Gaussian reverse process p(x_{t-1} | x_t, c) = N(mean(x_t, t, c), sigma_t^2 I).
///
/// The mean is a single dense map over the concatenated input
/// z = [flatten(x_t); t/T; embedding] followed by an optional tanh. The dense map
/// can be wrapped in a LoRA adapter, after which only the adapter factors are
/// trainable and the base weight and bias are frozen.
///
/// Trainable parameters are exposed as one flat vector:
///   without LoRA: [vec(W) column-major; b]
///   with LoRA:    [vec(B); vec(A)]
class DenoisingPolicy {
 public:
  DenoisingPolicy(PolicyConfig config, Eigen::MatrixXd weight, Eigen::VectorXd bias);
  static DenoisingPolicy zeros(const PolicyConfig& config);

  const PolicyConfig& config() const { return config_; }
  int latent_size() const { return config_.shape.size(); }
  int input_size() const { return latent_size() + 1 + config_.context_dim; }
  int num_steps() const { return config_.num_steps; }
  double sigma(int t) const;

  Eigen::VectorXd mean(const Eigen::VectorXd& x, int t, const Eigen::VectorXd& context) const;

  /// log N(x_prev; mean(x_t, t, c), sigma_t^2 I). Requires x_t.timestep == x_prev.timestep + 1.
  double log_prob(const LatentState& x_t, const LatentState& x_prev, const PromptContext& context) const;

  /// grad += weight * d log_prob / d(trainable parameters).
  void accumulate_log_prob_gradient(const LatentState& x_t, const LatentState& x_prev, const PromptContext& context,
                                    double weight, Eigen::Ref<Eigen::VectorXd> grad) const;

  void enable_lora(int rank, std::optional<double> alpha, std::uint64_t seed);
  void set_lora(lora::LoraLayer layer);
  bool lora_enabled() const { return lora_.has_value(); }
  const std::optional<lora::LoraLayer>& lora() const { return lora_; }

  const Eigen::MatrixXd& base_weight() const { return lora_ ? lora_->base() : weight_; }
  const Eigen::VectorXd& bias() const { return bias_; }
  Eigen::MatrixXd effective_weight() const { return lora_ ? lora_->merge() : weight_; }

  Eigen::Index trainable_size() const;
  Eigen::VectorXd trainable_parameters() const;
  void set_trainable_parameters(const Eigen::VectorXd& theta);

  /// Rounds trainable parameters onto the float32 grid so checkpoints are lossless.
  void round_to_float32();

 private:
  Eigen::VectorXd input_vector(const Eigen::VectorXd& x, int t, const Eigen::VectorXd& context) const;
  void check_context(const Eigen::VectorXd& context) const;

  PolicyConfig config_;
  Eigen::MatrixXd weight_;  // unused once LoRA is enabled (moved into lora_)
  Eigen::VectorXd bias_;
  std::optional<lora::LoraLayer> lora_;
};

/// x_T ~ N(0, I), then x_{t-1} ~ N(mean, sigma_t^2 I) down to t = 0.
/// Deterministic in (parameters, context, seed). Throws PolicyDivergence naming the
/// timestep if the mean becomes non-finite.
Trajectory sample_trajectory(const DenoisingPolicy& policy, const PromptContext& context, std::uint64_t seed);

double log_prob(const DenoisingPolicy& policy, const LatentState& x_t, const LatentState& x_prev,
                const PromptContext& context);

Image decode(const LatentState& x0, const PolicyConfig& config);
/// Inverse of decode on in-range pixels.
Eigen::VectorXd encode(const Image& image, const PolicyConfig& config);

/// Cumulative signal fraction of the forward process, cos^2(pi t / 2T); exactly 0 at t = T.
double forward_signal_level(int t, int num_steps);

/// max(1, round_half_up(strength * T)). Requires strength in (0, 1].
int img2img_start_step(double strength, int num_steps);

/// Encodes the image, noises it forward to t_start and denoises back to t = 0.
/// With strength 1 the result is bitwise identical to sample_trajectory for the same seed.
Trajectory img2img_trajectory(const DenoisingPolicy& policy, const PromptContext& context, const Image& input,
                              double strength, std::uint64_t seed);

}  // namespace safetune::policy
