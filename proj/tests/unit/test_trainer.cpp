// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <map>

#include <doctest.h>

#include "safetune/core/error.hpp"
#include "safetune/pipeline/runtime.hpp"
#include "safetune/policy/checkpoint.hpp"
#include "safetune/trainer/adam.hpp"
#include "safetune/trainer/trainer.hpp"
#include "test_support.hpp"

using namespace safetune;
using namespace safetune::trainer;

namespace {

policy::PolicyConfig scalar_config() {
  policy::PolicyConfig c;
  c.shape = {1, 1, 1};
  c.num_steps = 1;
  c.sigma_min = 1.0;
  c.sigma_max = 1.0;
  c.context_dim = 2;
  c.mean_scale = 1.0;
  c.activation = policy::MeanActivation::linear;
  return c;
}

PromptContext ctx(std::string text = "p") { return {std::move(text), Eigen::VectorXd::Zero(2), policy::PromptTag::unknown}; }

// Batch whose behavior log-probs are the sampling-time ones shifted by `log_ratio`.
TrajectoryBatch batch_of(const DenoisingPolicy& policy, const std::vector<double>& rewards, double log_ratio = 0.0,
                         std::uint64_t seed = 0) {
  TrajectoryBatch b;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    b.trajectories.push_back(policy::sample_trajectory(policy, ctx(), seed + i));
    b.rewards.push_back(rewards[i]);
    b.breakdowns.emplace_back();
    auto behavior = b.trajectories.back().step_log_probs;
    for (double& lp : behavior) lp -= log_ratio;
    b.behavior_log_probs.push_back(behavior);
  }
  return b;
}

DenoisingPolicy scalar_policy(double mu) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(1, 4);
  return DenoisingPolicy(scalar_config(), w, Eigen::VectorXd::Constant(1, mu));
}

}  // namespace

TEST_CASE("advantage normalization") {
  const std::vector<double> same = {1, 1, 1};
  CHECK(normalize_advantages(same, AdvantageNorm::per_batch).isZero(0.0));
  const std::vector<double> two = {0, 2};
  const Eigen::VectorXd a = normalize_advantages(two, AdvantageNorm::per_batch);
  CHECK(a[0] == doctest::Approx(-1.0));
  CHECK(a[1] == doctest::Approx(1.0));
  const std::vector<double> raw = {0.3, -2, 7};
  CHECK(normalize_advantages(raw, AdvantageNorm::none) == Eigen::Vector3d(0.3, -2, 7));

  const std::vector<double> grouped = {0, 2, 10, 14};
  const std::vector<std::string> keys = {"a", "a", "b", "b"};
  const Eigen::VectorXd g = normalize_advantages(grouped, AdvantageNorm::per_prompt, keys);
  CHECK(g[0] == doctest::Approx(-1.0));
  CHECK(g[1] == doctest::Approx(1.0));
  CHECK(g[2] == doctest::Approx(-1.0));
  CHECK(g[3] == doctest::Approx(1.0));
}

TEST_CASE("clipped surrogate on a hand-built single step") {
  const auto policy = scalar_policy(0.0);
  const std::vector<double> adv = {2.0};
  const auto batch = batch_of(policy, {0.0}, std::log(1.05));
  const auto s = clipped_surrogate_loss(batch, adv, policy, 0.1);
  CHECK(s.loss == doctest::Approx(-2.1).epsilon(1e-12));  // -min(1.05 * 2, 1.1 * 2)
  CHECK(s.clipped_fraction == 0.0);
}

TEST_CASE("a saturated ratio contributes no gradient") {
  const auto policy = scalar_policy(0.2);
  const std::vector<double> adv = {1.0};
  const auto batch = batch_of(policy, {0.0}, std::log(1.2));  // rho = 1 + 2 eps
  const auto s = clipped_surrogate_loss(batch, adv, policy, 0.1);
  CHECK(s.gradient.isZero(0.0));
  CHECK(s.loss == doctest::Approx(-1.1));
  CHECK(s.clipped_fraction == 1.0);
}

TEST_CASE("surrogate gradient at the behavior policy equals the score-function gradient") {
  policy::PolicyConfig cfg;
  cfg.shape = {1, 2, 2};
  cfg.num_steps = 3;
  cfg.context_dim = 2;
  const auto policy = testing::random_policy(cfg, 8);
  const auto batch = batch_of(policy, {0.1, 0.9, -0.4, 0.3, 0.5}, 0.0, 40);
  const Eigen::VectorXd adv = normalize_advantages(batch.rewards, AdvantageNorm::per_batch);
  const std::span<const double> a(adv.data(), static_cast<std::size_t>(adv.size()));
  const auto s = clipped_surrogate_loss(batch, a, policy, 0.1);
  const Eigen::VectorXd g = reinforce_gradient(batch, policy, a);
  CHECK((s.gradient + g).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("score-function gradient of a Gaussian bandit") {
  // x ~ N(mu, 1), reward x: d/dmu E[x] = 1.
  const auto policy = scalar_policy(0.5);
  const int n = 20000;
  std::vector<double> rewards(n);
  auto batch = batch_of(policy, rewards, 0.0, 100);
  for (int i = 0; i < n; ++i) batch.rewards[i] = batch.trajectories[i].final_state().values[0];
  const Eigen::VectorXd g = reinforce_gradient(batch, policy, AdvantageNorm::none);
  // Per-sample term x (x - mu) has variance mu^2 + 2.
  const double se = std::sqrt((0.25 + 2.0) / n);
  CHECK(std::abs(g[g.size() - 1] - 1.0) < 3 * se);

  CHECK(reinforce_gradient(batch, policy, std::vector<double>(n, 0.0)).isZero(0.0));
  auto flat = batch;
  for (double& r : flat.rewards) r = 3.0;
  CHECK(reinforce_gradient(flat, policy, AdvantageNorm::per_batch).isZero(0.0));
}

TEST_CASE("prompt sampling") {
  const std::vector<PromptContext> one = {ctx("only")};
  for (const auto& p : sample_prompts(one, 5, 1)) CHECK(p.text == "only");

  const std::vector<PromptContext> four = {ctx("a"), ctx("b"), ctx("c"), ctx("d")};
  const auto draws = sample_prompts(four, 10000, 7);
  CHECK(draws.size() == 10000);
  std::map<std::string, int> counts;
  for (const auto& p : draws) counts[p.text]++;
  const double sd = std::sqrt(10000 * 0.25 * 0.75);
  for (const auto& [text, c] : counts) CHECK(std::abs(c - 2500) < 3 * sd);

  const auto again = sample_prompts(four, 10000, 7);
  for (std::size_t i = 0; i < draws.size(); ++i) REQUIRE(draws[i].text == again[i].text);

  std::vector<PromptContext> mixed = four;
  mixed[0].tag = policy::PromptTag::unsafe;
  int unsafe = 0;
  for (const auto& p : sample_mixed_prompts(mixed, 100, 0.3, 2)) unsafe += p.tag == policy::PromptTag::unsafe;
  CHECK(unsafe == 30);
}

TEST_CASE("adam first step moves each coordinate by the learning rate") {
  AdamOptimizer opt(3, {0.01, 0.9, 0.999, 1e-8});
  const Eigen::VectorXd p = opt.step(Eigen::Vector3d(1, 2, 3), Eigen::Vector3d(0.5, -4, 1e-3));
  CHECK(p[0] == doctest::Approx(0.99));
  CHECK(p[1] == doctest::Approx(2.01));
  CHECK(p[2] == doctest::Approx(2.99).epsilon(1e-4));
  CHECK(opt.steps() == 1);
}

TEST_CASE("training rounds on the toy world") {
  auto rt = pipeline::make_runtime(pipeline::RunConfig{});
  const policy::ToyTextEncoder& enc = rt.context.encoder;
  const std::vector<PromptContext> pool = {enc.encode("a photo of a nude dancer", policy::PromptTag::unsafe),
                                           enc.encode("a photo of a dancer", policy::PromptTag::benign)};
  TrainerConfig tc;
  tc.batch_size = 8;
  tc.samples_per_prompt = 2;
  tc.inner_epochs = 2;

  SUBCASE("batches have one trajectory per prompt and replayable rewards") {
    const auto base = rt.base_policy();
    const std::vector<PromptContext> prompts = {pool[0], pool[1], pool[0]};
    const auto batch = collect_batch(base, prompts, *rt.engine, 3);
    CHECK(batch.size() == 3);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto img = policy::decode(batch.trajectories[i].final_state(), base.config());
      CHECK(rt.engine->composite_reward(img, prompts[i]).total == batch.rewards[i]);
    }
    CHECK(serialize(collect_batch(base, prompts, *rt.engine, 3, 3).trajectories[2]) ==
          serialize(batch.trajectories[2]));
  }

  SUBCASE("zero learning rate keeps parameters and still reports stats") {
    auto p = rt.base_policy();
    const Eigen::VectorXd before = p.trainable_parameters();
    tc.learning_rate = 0.0;
    AdamOptimizer opt(p.trainable_size(), tc.adam());
    const auto stats = train_round(p, opt, pool, *rt.engine, tc, 0);
    CHECK(p.trainable_parameters() == before);
    CHECK(stats.mean_reward > 0.0);
    CHECK(stats.round == 0);
  }

  SUBCASE("rounds are deterministic and parameters stay on the float32 grid") {
    auto p1 = rt.base_policy();
    auto p2 = rt.base_policy();
    AdamOptimizer o1(p1.trainable_size(), tc.adam()), o2(p2.trainable_size(), tc.adam());
    const auto s1 = train_round(p1, o1, pool, *rt.engine, tc, 4);
    const auto s2 = train_round(p2, o2, pool, *rt.engine, tc, 4);
    CHECK(s1 == s2);
    CHECK(p1.trainable_parameters() == p2.trainable_parameters());
    const Eigen::VectorXd theta = p1.trainable_parameters();
    for (Eigen::Index i = 0; i < theta.size(); ++i) REQUIRE(theta[i] == static_cast<double>(static_cast<float>(theta[i])));
    CHECK(TrainStats::from_json(s1.to_json()) == s1);
  }

  SUBCASE("invalid settings are rejected") {
    tc.batch_size = 7;
    CHECK_THROWS_AS(tc.validate(), InvalidArgument);
    tc.batch_size = 8;
    tc.clip_epsilon = 0.0;
    CHECK_THROWS_AS(tc.validate(), InvalidArgument);
  }
}
