// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "safetune/policy/denoising_policy.hpp"
#include "safetune/reward/reward_engine.hpp"
#include "safetune/trainer/adam.hpp"

namespace safetune::trainer {

using policy::DenoisingPolicy;
using policy::PromptContext;
using policy::Trajectory;

enum class AdvantageNorm { per_batch, per_prompt, none };

AdvantageNorm parse_advantage_norm(std::string_view s);
std::string_view to_string(AdvantageNorm mode);

struct TrainerConfig {
  int batch_size = 32;
  // Each sampled prompt is repeated this many times in the batch (batch_size must be a multiple).
  int samples_per_prompt = 1;
  int inner_epochs = 4;  // gradient passes per sampled batch
  double clip_epsilon = 0.1;
  double learning_rate = 1e-3;
  AdvantageNorm advantage_norm = AdvantageNorm::per_batch;
  int total_rounds = 30;
  std::uint64_t seed = 0;
  // Share of each batch drawn from unsafe-tagged prompts when the pool has both tags.
  double unsafe_fraction = 0.5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int workers = 1;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

struct TrajectoryBatch {
  std::vector<Trajectory> trajectories;
  std::vector<double> rewards;
  std::vector<reward::RewardBreakdown> breakdowns;
  // log p_{theta_old} per step, frozen at sampling time.
  std::vector<std::vector<double>> behavior_log_probs;

  std::size_t size() const { return trajectories.size(); }
  void validate() const;
};

struct TrainStats {
  int round = 0;
  double mean_reward = 0.0;
  double mean_nudity = 0.0;
  double mean_alignment = 0.0;
  double clipped_fraction = 0.0;
  double gradient_norm = 0.0;

  nlohmann::json to_json() const;
  static TrainStats from_json(const nlohmann::json& j);
  friend bool operator==(const TrainStats&, const TrainStats&) = default;
};

/// n uniform i.i.d. draws from the pool, deterministic per seed.
std::vector<PromptContext> sample_prompts(std::span<const PromptContext> pool, int n, std::uint64_t seed);

/// Like sample_prompts, but draws round(unsafe_fraction * n) prompts from the
/// unsafe-tagged part of the pool and the rest from the others. Falls back to
/// uniform sampling when either part is empty.
std::vector<PromptContext> sample_mixed_prompts(std::span<const PromptContext> pool, int n, double unsafe_fraction,
                                                std::uint64_t seed);

/// One trajectory and terminal reward per prompt. Trajectory i uses seed
/// derive_seed(seed, {i}), so the batch does not depend on the worker count.
/// Fails if any item fails, naming the first failing index.
TrajectoryBatch collect_batch(const DenoisingPolicy& policy, std::span<const PromptContext> prompts,
                              const reward::RewardEngine& engine, std::uint64_t seed, int workers = 1);

/// per_batch: (r - mean) / std (population std; all zero when std < 1e-8).
/// per_prompt: the same within each group of equal prompt text; a singleton
///   group falls back to the batch statistics.
/// none: rewards unchanged.
Eigen::VectorXd normalize_advantages(std::span<const double> rewards, AdvantageNorm mode);
Eigen::VectorXd normalize_advantages(std::span<const double> rewards, AdvantageNorm mode,
                                     std::span<const std::string> prompt_keys);
Eigen::VectorXd normalize_advantages(const TrajectoryBatch& batch, AdvantageNorm mode);

/// Score-function estimate of grad J:
///   (1/N) sum_i A_i * sum_t grad log p(x_{t-1} | x_t, c_i).
Eigen::VectorXd reinforce_gradient(const TrajectoryBatch& batch, const DenoisingPolicy& policy, AdvantageNorm mode);
Eigen::VectorXd reinforce_gradient(const TrajectoryBatch& batch, const DenoisingPolicy& policy,
                                   std::span<const double> advantages);

struct SurrogateResult {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // d loss / d theta
  double clipped_fraction = 0.0;
};

/// loss = -(1/N) sum_i sum_t min(rho * A_i, clip(rho, 1 - eps, 1 + eps) * A_i),
/// rho = exp(log p_theta - log p_theta_old) per step. At theta = theta_old the
/// negated gradient equals reinforce_gradient on the same advantages.
SurrogateResult clipped_surrogate_loss(const TrajectoryBatch& batch, std::span<const double> advantages,
                                       const DenoisingPolicy& policy, double clip_epsilon);

/// Sample prompts, collect a batch under a frozen snapshot, then take
/// inner_epochs Adam steps on the clipped surrogate. Parameters stay on the
/// float32 grid. Round r draws its randomness from derive_seed(cfg.seed, {r}).
TrainStats train_round(DenoisingPolicy& policy, AdamOptimizer& optimizer, std::span<const PromptContext> pool,
                       const reward::RewardEngine& engine, const TrainerConfig& config, int round);

}  // namespace safetune::trainer
