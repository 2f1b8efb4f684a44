// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/trainer/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/core/parallel.hpp"
#include "safetune/core/rng.hpp"

namespace safetune::trainer {

AdvantageNorm parse_advantage_norm(std::string_view s) {
  if (s == "per_batch") return AdvantageNorm::per_batch;
  if (s == "per_prompt") return AdvantageNorm::per_prompt;
  if (s == "none") return AdvantageNorm::none;
  throw InvalidArgument(fmt::format("unknown advantage normalization '{}'", s));
}

std::string_view to_string(AdvantageNorm mode) {
  switch (mode) {
    case AdvantageNorm::per_batch: return "per_batch";
    case AdvantageNorm::per_prompt: return "per_prompt";
    case AdvantageNorm::none: return "none";
  }
  return "none";
}

void TrainerConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (advantage_norm != AdvantageNorm::none && batch_size < 2) {
    throw InvalidArgument("advantage normalization needs batch_size >= 2");
  }
  if (samples_per_prompt < 1 || batch_size % samples_per_prompt != 0) {
    throw InvalidArgument("batch_size must be a positive multiple of samples_per_prompt");
  }
  if (inner_epochs < 1) throw InvalidArgument("inner_epochs must be >= 1");
  if (!(clip_epsilon > 0.0)) throw InvalidArgument("clip_epsilon must be > 0");
  if (!(learning_rate >= 0.0)) throw InvalidArgument("learning_rate must be >= 0");
  if (total_rounds < 0) throw InvalidArgument("total_rounds must be >= 0");
  if (!(unsafe_fraction >= 0.0 && unsafe_fraction <= 1.0)) throw InvalidArgument("unsafe_fraction must be in [0, 1]");
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
}

void TrajectoryBatch::validate() const {
  if (rewards.size() != trajectories.size() || behavior_log_probs.size() != trajectories.size()) {
    throw InvalidArgument("trajectory batch fields have different lengths");
  }
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    if (behavior_log_probs[i].size() != trajectories[i].step_log_probs.size()) {
      throw InvalidArgument(fmt::format("trajectory {} is missing behavior log-probs", i));
    }
  }
}

nlohmann::json TrainStats::to_json() const {
  return {{"round", round},
          {"mean_reward", mean_reward},
          {"mean_nudity", mean_nudity},
          {"mean_alignment", mean_alignment},
          {"clipped_fraction", clipped_fraction},
          {"gradient_norm", gradient_norm}};
}

TrainStats TrainStats::from_json(const nlohmann::json& j) {
  TrainStats s;
  s.round = j.at("round").get<int>();
  s.mean_reward = j.at("mean_reward").get<double>();
  s.mean_nudity = j.at("mean_nudity").get<double>();
  s.mean_alignment = j.at("mean_alignment").get<double>();
  s.clipped_fraction = j.at("clipped_fraction").get<double>();
  s.gradient_norm = j.at("gradient_norm").get<double>();
  return s;
}

std::vector<PromptContext> sample_prompts(std::span<const PromptContext> pool, int n, std::uint64_t seed) {
  if (pool.empty()) throw InvalidArgument("cannot sample prompts from an empty pool");
  if (n < 0) throw InvalidArgument("prompt count must be >= 0");
  Engine engine = make_engine(seed, {0x5a3});
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  std::vector<PromptContext> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(pool[pick(engine)]);
  return out;
}

std::vector<PromptContext> sample_mixed_prompts(std::span<const PromptContext> pool, int n, double unsafe_fraction,
                                                std::uint64_t seed) {
  std::vector<PromptContext> unsafe, other;
  for (const auto& p : pool) (p.tag == policy::PromptTag::unsafe ? unsafe : other).push_back(p);
  if (unsafe.empty() || other.empty()) return sample_prompts(pool, n, seed);
  const int n_unsafe = static_cast<int>(std::floor(unsafe_fraction * n + 0.5));
  auto out = sample_prompts(unsafe, n_unsafe, derive_seed(seed, {1}));
  auto rest = sample_prompts(other, n - n_unsafe, derive_seed(seed, {2}));
  out.insert(out.end(), std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.end()));
  return out;
}

TrajectoryBatch collect_batch(const DenoisingPolicy& policy, std::span<const PromptContext> prompts,
                              const reward::RewardEngine& engine, std::uint64_t seed, int workers) {
  const std::size_t n = prompts.size();
  std::vector<std::optional<Trajectory>> trajs(n);
  std::vector<std::optional<reward::RewardBreakdown>> rewards(n);
  std::vector<std::exception_ptr> errors(n);

  const auto work = [&](std::size_t i) {
    try {
      Trajectory t = policy::sample_trajectory(policy, prompts[i], derive_seed(seed, {i}));
      rewards[i] = engine.composite_reward(policy::decode(t.final_state(), policy.config()), prompts[i]);
      trajs[i] = std::move(t);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  parallel_for(n, workers, work);

  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw Error(fmt::format("batch item {} ('{}') failed: {}", i, prompts[i].text, e.what()));
    }
  }

  TrajectoryBatch batch;
  batch.trajectories.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    batch.behavior_log_probs.push_back(trajs[i]->step_log_probs);
    batch.trajectories.push_back(std::move(*trajs[i]));
    batch.rewards.push_back(rewards[i]->total);
    batch.breakdowns.push_back(std::move(*rewards[i]));
  }
  return batch;
}

namespace {

std::pair<double, double> mean_and_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / static_cast<double>(v.size()))};
}

double standardize(double r, double mean, double sd) { return sd < 1e-8 ? 0.0 : (r - mean) / sd; }

}  // namespace

Eigen::VectorXd normalize_advantages(std::span<const double> rewards, AdvantageNorm mode,
                                     std::span<const std::string> prompt_keys) {
  Eigen::VectorXd out = Eigen::Map<const Eigen::VectorXd>(rewards.data(), static_cast<Eigen::Index>(rewards.size()));
  if (mode == AdvantageNorm::none) return out;
  if (rewards.size() < 2) throw InvalidArgument("advantage normalization needs at least 2 rewards");
  const std::vector<double> all(rewards.begin(), rewards.end());
  const auto [mean, sd] = mean_and_std(all);
  for (std::size_t i = 0; i < rewards.size(); ++i) out[static_cast<Eigen::Index>(i)] = standardize(rewards[i], mean, sd);
  if (mode == AdvantageNorm::per_batch) return out;

  if (prompt_keys.size() != rewards.size()) throw InvalidArgument("per_prompt normalization needs one key per reward");
  std::map<std::string_view, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < rewards.size(); ++i) groups[prompt_keys[i]].push_back(i);
  for (const auto& [key, idx] : groups) {
    if (idx.size() < 2) continue;
    std::vector<double> g;
    for (auto i : idx) g.push_back(rewards[i]);
    const auto [gm, gsd] = mean_and_std(g);
    for (auto i : idx) out[static_cast<Eigen::Index>(i)] = standardize(rewards[i], gm, gsd);
  }
  return out;
}

Eigen::VectorXd normalize_advantages(std::span<const double> rewards, AdvantageNorm mode) {
  if (mode == AdvantageNorm::per_prompt) throw InvalidArgument("per_prompt normalization needs prompt keys");
  return normalize_advantages(rewards, mode, {});
}

Eigen::VectorXd normalize_advantages(const TrajectoryBatch& batch, AdvantageNorm mode) {
  std::vector<std::string> keys;
  keys.reserve(batch.size());
  for (const auto& t : batch.trajectories) keys.push_back(t.context.text);
  return normalize_advantages(batch.rewards, mode, keys);
}

Eigen::VectorXd reinforce_gradient(const TrajectoryBatch& batch, const DenoisingPolicy& policy,
                                   std::span<const double> advantages) {
  if (advantages.size() != batch.size()) throw InvalidArgument("one advantage per trajectory is required");
  if (batch.size() == 0) throw InvalidArgument("empty batch");
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.trainable_size());
  Eigen::VectorXd item(policy.trainable_size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (advantages[i] == 0.0) continue;
    item.setZero();
    const auto& tr = batch.trajectories[i];
    for (std::size_t s = 0; s + 1 < tr.states.size(); ++s) {
      policy.accumulate_log_prob_gradient(tr.states[s], tr.states[s + 1], tr.context, advantages[i], item);
    }
    if (!item.allFinite()) throw Error(fmt::format("non-finite policy gradient from trajectory {}", i));
    grad += item;
  }
  return grad / static_cast<double>(batch.size());
}

Eigen::VectorXd reinforce_gradient(const TrajectoryBatch& batch, const DenoisingPolicy& policy, AdvantageNorm mode) {
  const Eigen::VectorXd adv = normalize_advantages(batch, mode);
  return reinforce_gradient(batch, policy, std::span<const double>(adv.data(), static_cast<std::size_t>(adv.size())));
}

SurrogateResult clipped_surrogate_loss(const TrajectoryBatch& batch, std::span<const double> advantages,
                                       const DenoisingPolicy& policy, double clip_epsilon) {
  batch.validate();
  if (advantages.size() != batch.size()) throw InvalidArgument("one advantage per trajectory is required");
  if (batch.size() == 0) throw InvalidArgument("empty batch");
  if (!(clip_epsilon > 0.0)) throw InvalidArgument("clip_epsilon must be > 0");

  SurrogateResult out;
  out.gradient = Eigen::VectorXd::Zero(policy.trainable_size());
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  std::size_t steps = 0, clipped = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& tr = batch.trajectories[i];
    const double adv = advantages[i];
    for (std::size_t s = 0; s + 1 < tr.states.size(); ++s) {
      const double lp = policy.log_prob(tr.states[s], tr.states[s + 1], tr.context);
      const double ratio = std::exp(lp - batch.behavior_log_probs[i][s]);
      const double clipped_ratio = std::clamp(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon);
      ++steps;
      if (std::abs(ratio - 1.0) > clip_epsilon) ++clipped;
      const double unclipped_term = ratio * adv;
      const double clipped_term = clipped_ratio * adv;
      out.loss -= inv_n * std::min(unclipped_term, clipped_term);
      // Only the unclipped branch depends on theta.
      if (adv != 0.0 && unclipped_term <= clipped_term) {
        policy.accumulate_log_prob_gradient(tr.states[s], tr.states[s + 1], tr.context, -inv_n * adv * ratio,
                                            out.gradient);
      }
    }
  }
  if (!out.gradient.allFinite()) throw Error("non-finite surrogate gradient");
  out.clipped_fraction = steps ? static_cast<double>(clipped) / static_cast<double>(steps) : 0.0;
  return out;
}

TrainStats train_round(DenoisingPolicy& policy, AdamOptimizer& optimizer, std::span<const PromptContext> pool,
                       const reward::RewardEngine& engine, const TrainerConfig& config, int round) {
  config.validate();
  const std::uint64_t round_seed = derive_seed(config.seed, {static_cast<std::uint64_t>(round)});
  try {
    const auto distinct = sample_mixed_prompts(pool, config.batch_size / config.samples_per_prompt,
                                               config.unsafe_fraction, round_seed);
    std::vector<PromptContext> prompts;
    prompts.reserve(static_cast<std::size_t>(config.batch_size));
    for (const auto& p : distinct)
      for (int k = 0; k < config.samples_per_prompt; ++k) prompts.push_back(p);
    const DenoisingPolicy snapshot = policy;
    const TrajectoryBatch batch = collect_batch(snapshot, prompts, engine, derive_seed(round_seed, {1}), config.workers);
    const Eigen::VectorXd adv = normalize_advantages(batch, config.advantage_norm);
    const std::span<const double> adv_span(adv.data(), static_cast<std::size_t>(adv.size()));

    TrainStats stats;
    stats.round = round;
    for (const auto& b : batch.breakdowns) {
      stats.mean_reward += b.total;
      stats.mean_nudity += b.nudity_term;
      stats.mean_alignment += b.alignment_term;
    }
    const double n = static_cast<double>(batch.size());
    stats.mean_reward /= n;
    stats.mean_nudity /= n;
    stats.mean_alignment /= n;

    for (int epoch = 0; epoch < config.inner_epochs; ++epoch) {
      const SurrogateResult s = clipped_surrogate_loss(batch, adv_span, policy, config.clip_epsilon);
      if (epoch == 0) stats.gradient_norm = s.gradient.norm();
      stats.clipped_fraction += s.clipped_fraction / config.inner_epochs;
      policy.set_trainable_parameters(optimizer.step(policy.trainable_parameters(), s.gradient));
      policy.round_to_float32();
    }
    return stats;
  } catch (const std::exception& e) {
    throw Error(fmt::format("training round {} failed: {}", round, e.what()));
  }
}

}  // namespace safetune::trainer
