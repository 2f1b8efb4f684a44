// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/policy/denoising_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/core/rng.hpp"

namespace safetune::policy {

MeanActivation parse_mean_activation(std::string_view s) {
  if (s == "tanh") return MeanActivation::tanh;
  if (s == "linear") return MeanActivation::linear;
  throw InvalidArgument(fmt::format("unknown mean activation '{}'", s));
}

std::string_view to_string(MeanActivation a) { return a == MeanActivation::linear ? "linear" : "tanh"; }

namespace {

Eigen::VectorXd standard_normal(int n, std::uint64_t seed, std::uint64_t stream) {
  Engine engine = make_engine(seed, {stream});
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = normal(engine);
  return v;
}

double gaussian_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean, double sigma) {
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma) - (x - mean).squaredNorm() / (2.0 * sigma * sigma);
}

void round_in_place(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
}

void round_in_place(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i]);
}

}  // namespace

void PolicyConfig::validate() const {
  if (shape.channels < 1 || shape.height < 1 || shape.width < 1) throw InvalidArgument("latent shape must be positive");
  if (num_steps < 1) throw InvalidArgument("num_steps must be at least 1");
  if (!(sigma_min > 0.0) || !(sigma_max > 0.0)) throw InvalidArgument("noise schedule endpoints must be positive");
  if (context_dim < 0) throw InvalidArgument("context_dim must be non-negative");
  if (!(mean_scale > 0.0)) throw InvalidArgument("mean_scale must be positive");
  if (!(decode_scale > 0.0)) throw InvalidArgument("decode_scale must be positive");
}

DenoisingPolicy::DenoisingPolicy(PolicyConfig config, Eigen::MatrixXd weight, Eigen::VectorXd bias)
    : config_(config), weight_(std::move(weight)), bias_(std::move(bias)) {
  config_.validate();
  if (weight_.rows() != latent_size() || weight_.cols() != input_size() || bias_.size() != latent_size()) {
    throw InvalidArgument(fmt::format("policy parameters must be {}x{} and {}; got {}x{} and {}", latent_size(),
                                      input_size(), latent_size(), weight_.rows(), weight_.cols(), bias_.size()));
  }
}

DenoisingPolicy DenoisingPolicy::zeros(const PolicyConfig& config) {
  config.validate();
  const int d = config.shape.size();
  return DenoisingPolicy(config, Eigen::MatrixXd::Zero(d, d + 1 + config.context_dim), Eigen::VectorXd::Zero(d));
}

double DenoisingPolicy::sigma(int t) const {
  if (t < 1 || t > config_.num_steps) throw InvalidArgument(fmt::format("no noise scale for timestep {}", t));
  if (config_.num_steps == 1) return config_.sigma_max;
  const double frac = static_cast<double>(t - 1) / (config_.num_steps - 1);
  return config_.sigma_min + (config_.sigma_max - config_.sigma_min) * frac;
}

void DenoisingPolicy::check_context(const Eigen::VectorXd& context) const {
  if (context.size() != config_.context_dim) {
    throw InvalidArgument(
        fmt::format("context embedding has dimension {}, policy expects {}", context.size(), config_.context_dim));
  }
}

Eigen::VectorXd DenoisingPolicy::input_vector(const Eigen::VectorXd& x, int t, const Eigen::VectorXd& context) const {
  if (x.size() != latent_size()) {
    throw InvalidArgument(fmt::format("latent has {} values, policy expects {}", x.size(), latent_size()));
  }
  check_context(context);
  Eigen::VectorXd z(input_size());
  z << x, static_cast<double>(t) / config_.num_steps, context;
  return z;
}

Eigen::VectorXd DenoisingPolicy::mean(const Eigen::VectorXd& x, int t, const Eigen::VectorXd& context) const {
  const Eigen::VectorXd z = input_vector(x, t, context);
  Eigen::VectorXd a = lora_ ? lora_->forward(z) : Eigen::VectorXd(weight_ * z);
  a += bias_;
  if (config_.activation == MeanActivation::tanh) a = a.array().tanh();
  return config_.mean_scale * a;
}

double DenoisingPolicy::log_prob(const LatentState& x_t, const LatentState& x_prev,
                                 const PromptContext& context) const {
  if (x_t.timestep != x_prev.timestep + 1) {
    throw InvalidArgument(
        fmt::format("log_prob needs consecutive timesteps, got {} -> {}", x_t.timestep, x_prev.timestep));
  }
  return gaussian_log_density(x_prev.values, mean(x_t.values, x_t.timestep, context.embedding), sigma(x_t.timestep));
}

void DenoisingPolicy::accumulate_log_prob_gradient(const LatentState& x_t, const LatentState& x_prev,
                                                   const PromptContext& context, double weight,
                                                   Eigen::Ref<Eigen::VectorXd> grad) const {
  if (x_t.timestep != x_prev.timestep + 1) {
    throw InvalidArgument(
        fmt::format("log_prob needs consecutive timesteps, got {} -> {}", x_t.timestep, x_prev.timestep));
  }
  if (grad.size() != trainable_size()) throw InvalidArgument("gradient buffer has the wrong size");
  const int t = x_t.timestep;
  const Eigen::VectorXd z = input_vector(x_t.values, t, context.embedding);
  Eigen::VectorXd a = lora_ ? lora_->forward(z) : Eigen::VectorXd(weight_ * z);
  a += bias_;

  const double s = sigma(t);
  // d logp / d pre-activation
  Eigen::VectorXd delta;
  if (config_.activation == MeanActivation::tanh) {
    const Eigen::ArrayXd h = a.array().tanh();
    const Eigen::ArrayXd mu = config_.mean_scale * h;
    delta = weight * (x_prev.values.array() - mu) / (s * s) * config_.mean_scale * (1.0 - h.square());
  } else {
    const Eigen::ArrayXd mu = config_.mean_scale * a.array();
    delta = weight * (x_prev.values.array() - mu) / (s * s) * config_.mean_scale;
  }

  const Eigen::Index d = latent_size();
  const Eigen::Index k = input_size();
  if (lora_) {
    const Eigen::Index r = lora_->rank();
    Eigen::Map<Eigen::MatrixXd> g_up(grad.data(), d, r);
    Eigen::Map<Eigen::MatrixXd> g_down(grad.data() + d * r, r, k);
    lora_->accumulate_gradient(delta, z, g_up, g_down);
  } else {
    Eigen::Map<Eigen::MatrixXd> g_w(grad.data(), d, k);
    g_w.noalias() += delta * z.transpose();
    grad.segment(d * k, d) += delta;
  }
}

void DenoisingPolicy::enable_lora(int rank, std::optional<double> alpha, std::uint64_t seed) {
  if (lora_) throw InvalidArgument("lora is already enabled on this policy");
  lora_ = lora::LoraLayer::init(weight_, rank, alpha, seed);
  weight_.resize(0, 0);
}

void DenoisingPolicy::set_lora(lora::LoraLayer layer) {
  if (layer.base() != base_weight()) throw InvalidArgument("lora base does not match the policy weight");
  lora_ = std::move(layer);
  weight_.resize(0, 0);
}

Eigen::Index DenoisingPolicy::trainable_size() const {
  return lora_ ? lora_->trainable_size() : weight_.size() + bias_.size();
}

Eigen::VectorXd DenoisingPolicy::trainable_parameters() const {
  Eigen::VectorXd theta(trainable_size());
  if (lora_) {
    theta << Eigen::Map<const Eigen::VectorXd>(lora_->up().data(), lora_->up().size()),
        Eigen::Map<const Eigen::VectorXd>(lora_->down().data(), lora_->down().size());
  } else {
    theta << Eigen::Map<const Eigen::VectorXd>(weight_.data(), weight_.size()), bias_;
  }
  return theta;
}

void DenoisingPolicy::set_trainable_parameters(const Eigen::VectorXd& theta) {
  if (theta.size() != trainable_size()) {
    throw InvalidArgument(fmt::format("expected {} trainable parameters, got {}", trainable_size(), theta.size()));
  }
  if (lora_) {
    const auto nb = lora_->up().size();
    Eigen::Map<Eigen::VectorXd>(lora_->up().data(), nb) = theta.head(nb);
    Eigen::Map<Eigen::VectorXd>(lora_->down().data(), lora_->down().size()) = theta.tail(lora_->down().size());
  } else {
    Eigen::Map<Eigen::VectorXd>(weight_.data(), weight_.size()) = theta.head(weight_.size());
    bias_ = theta.tail(bias_.size());
  }
}

void DenoisingPolicy::round_to_float32() {
  if (lora_) {
    round_in_place(lora_->up());
    round_in_place(lora_->down());
  } else {
    round_in_place(weight_);
    round_in_place(bias_);
  }
}

namespace {

Trajectory denoise_from(const DenoisingPolicy& policy, const PromptContext& context, Eigen::VectorXd start,
                        int t_start, std::uint64_t seed) {
  Trajectory traj;
  traj.context = context;
  traj.seed = seed;
  traj.states.reserve(static_cast<std::size_t>(t_start) + 1);
  traj.step_log_probs.reserve(static_cast<std::size_t>(t_start));
  traj.states.push_back({std::move(start), t_start});
  for (int t = t_start; t >= 1; --t) {
    const Eigen::VectorXd mu = policy.mean(traj.states.back().values, t, context.embedding);
    if (!mu.allFinite()) throw PolicyDivergence(fmt::format("policy divergence at timestep {}", t));
    const double s = policy.sigma(t);
    Eigen::VectorXd next = mu + s * standard_normal(policy.latent_size(), seed, static_cast<std::uint64_t>(t));
    traj.step_log_probs.push_back(gaussian_log_density(next, mu, s));
    traj.states.push_back({std::move(next), t - 1});
  }
  return traj;
}

}  // namespace

Trajectory sample_trajectory(const DenoisingPolicy& policy, const PromptContext& context, std::uint64_t seed) {
  return denoise_from(policy, context, standard_normal(policy.latent_size(), seed, 0), policy.num_steps(), seed);
}

double log_prob(const DenoisingPolicy& policy, const LatentState& x_t, const LatentState& x_prev,
                const PromptContext& context) {
  return policy.log_prob(x_t, x_prev, context);
}

Image decode(const LatentState& x0, const PolicyConfig& config) {
  if (x0.timestep != 0) throw InvalidArgument(fmt::format("decode needs a t = 0 latent, got t = {}", x0.timestep));
  if (x0.values.size() != config.shape.size()) throw InvalidArgument("latent size does not match the configured shape");
  Image img;
  img.shape = config.shape;
  img.pixels = (0.5 + config.decode_scale * x0.values.array()).min(1.0).max(0.0).matrix();
  // NaN fails both comparisons above; map it to the midpoint.
  for (Eigen::Index i = 0; i < img.pixels.size(); ++i)
    if (std::isnan(img.pixels[i])) img.pixels[i] = 0.5;
  return img;
}

Eigen::VectorXd encode(const Image& image, const PolicyConfig& config) {
  if (!(image.shape == config.shape)) throw InvalidArgument("image shape does not match the configured shape");
  return ((image.pixels.array() - 0.5) / config.decode_scale).matrix();
}

double forward_signal_level(int t, int num_steps) {
  if (t <= 0) return 1.0;
  if (t >= num_steps) return 0.0;
  const double c = std::cos(0.5 * std::numbers::pi * t / num_steps);
  return c * c;
}

int img2img_start_step(double strength, int num_steps) {
  if (!(strength > 0.0 && strength <= 1.0)) {
    throw InvalidArgument(fmt::format("img2img strength must be in (0, 1], got {}", strength));
  }
  const int t = static_cast<int>(std::floor(strength * num_steps + 0.5));
  return std::clamp(t, 1, num_steps);
}

Trajectory img2img_trajectory(const DenoisingPolicy& policy, const PromptContext& context, const Image& input,
                              double strength, std::uint64_t seed) {
  const int t_start = img2img_start_step(strength, policy.num_steps());
  const double level = forward_signal_level(t_start, policy.num_steps());
  const Eigen::VectorXd noise = standard_normal(policy.latent_size(), seed, 0);
  Eigen::VectorXd start = noise;
  if (level > 0.0) start = std::sqrt(level) * encode(input, policy.config()) + std::sqrt(1.0 - level) * noise;
  return denoise_from(policy, context, std::move(start), t_start, seed);
}

}  // namespace safetune::policy
