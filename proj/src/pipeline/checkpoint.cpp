// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/pipeline/checkpoint.hpp"

#include <fmt/format.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"
#include "safetune/policy/checkpoint.hpp"

namespace safetune::pipeline {

namespace {

TensorBlock vector_block(std::string name, const Eigen::VectorXd& v) {
  return {std::move(name), {v.size()}, std::vector<double>(v.data(), v.data() + v.size())};
}

Eigen::VectorXd vector_from(const TensorBlock& b, Eigen::Index expected) {
  if (static_cast<Eigen::Index>(b.values.size()) != expected)
    throw FormatError(fmt::format("block '{}' has {} values, expected {}", b.name, b.values.size(), expected));
  return Eigen::Map<const Eigen::VectorXd>(b.values.data(), expected);
}

}  // namespace

void checkpoint_save(const std::filesystem::path& path, const policy::DenoisingPolicy& policy, int next_round,
                     const trainer::AdamOptimizer* optimizer, const std::string& config_hash) {
  nlohmann::json training = {{"next_round", next_round}, {"config_hash", config_hash}, {"adam_steps", nullptr}};
  std::vector<TensorBlock> extra;
  if (optimizer) {
    training["adam_steps"] = optimizer->steps();
    extra.push_back(vector_block("adam.m", optimizer->first_moment()));
    extra.push_back(vector_block("adam.v", optimizer->second_moment()));
  }
  policy::save_policy(path, policy, {{"training", training}}, extra);
}

TrainingState checkpoint_load(const std::filesystem::path& path) {
  try {
    const Container c = read_container(path);
    TrainingState state{policy::policy_from_container(c), 0, std::nullopt, ""};
    const auto it = c.manifest.find("training");
    if (it == c.manifest.end()) return state;
    const auto& t = *it;
    state.next_round = t.at("next_round").get<int>();
    state.config_hash = t.at("config_hash").get<std::string>();
    if (!t.at("adam_steps").is_null()) {
      const Eigen::Index n = state.policy.trainable_size();
      state.optimizer = OptimizerState{vector_from(c.block("adam.m"), n), vector_from(c.block("adam.v"), n),
                                       t.at("adam_steps").get<std::int64_t>()};
    }
    return state;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("checkpoint '{}' has a malformed manifest: {}", path.string(), e.what()));
  } catch (const Error& e) {
    throw FormatError(fmt::format("cannot load checkpoint '{}': {}", path.string(), e.what()));
  }
}

}  // namespace safetune::pipeline
