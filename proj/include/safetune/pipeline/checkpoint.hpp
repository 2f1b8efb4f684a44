// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "safetune/policy/denoising_policy.hpp"
#include "safetune/trainer/adam.hpp"

namespace safetune::pipeline {

struct OptimizerState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  std::int64_t steps = 0;
};

/// Everything needed to continue training bit-identically.
struct TrainingState {
  policy::DenoisingPolicy policy;
  int next_round = 0;
  std::optional<OptimizerState> optimizer;
  std::string config_hash;
};

/// Policy container plus a "training" manifest entry and adam.m / adam.v blocks.
void checkpoint_save(const std::filesystem::path& path, const policy::DenoisingPolicy& policy, int next_round,
                     const trainer::AdamOptimizer* optimizer, const std::string& config_hash);

/// Also accepts plain policy files, which load with next_round 0 and no optimizer state.
TrainingState checkpoint_load(const std::filesystem::path& path);

}  // namespace safetune::pipeline
