// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

// Declarative run configuration shared by every CLI command.
//
// The file is JSON with a top-level schema_version and one object per section.
// Unknown keys are rejected at every level. Relative paths inside the file are
// resolved against the directory holding the file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "safetune/attack/attack.hpp"
#include "safetune/pipeline/prompts.hpp"
#include "safetune/policy/denoising_policy.hpp"
#include "safetune/policy/text_encoder.hpp"
#include "safetune/policy/toy_world.hpp"
#include "safetune/reward/reward_engine.hpp"
#include "safetune/trainer/trainer.hpp"

namespace safetune::pipeline {

inline constexpr int kSchemaVersion = 1;

struct SyntheticPrompts {
  int n = 0;
  PromptTag kind = PromptTag::unsafe;
  std::uint64_t seed = 0;
};

/// A named prompt set, read from a file or generated.
struct PromptSource {
  std::string name;
  std::optional<std::filesystem::path> path;
  PromptLoadOptions load;
  std::optional<SyntheticPrompts> synthetic;
};

struct PluginSpec {
  std::string name;
  nlohmann::json options = nlohmann::json::object();
};

/// A policy under evaluation: the toy base policy when checkpoint is empty.
struct MethodSpec {
  std::string name;
  std::optional<std::filesystem::path> checkpoint;
};

struct PolicySection {
  policy::PolicyConfig model;
  policy::ToyWorldConfig world;
  policy::TextEncoderConfig encoder;
};

struct LoraSection {
  bool enabled = false;
  int rank = 4;
  std::optional<double> alpha;  // defaults to rank
  // Only the mean map exists in the toy policy; kept explicit for real backends.
  std::vector<std::string> targets = {"mean"};
};

struct RewardSection {
  reward::RewardConfig weights;
  PluginSpec detector{"stub_quadrant"};
  PluginSpec aligner{"stub_pattern"};
  std::optional<PluginSpec> face_analyzer;
  // Inline {label: {weight, unsafe}} object or a path to such a file; merged
  // over the detector's own class list.
  nlohmann::json class_weights = nullptr;
};

struct TrainerSection {
  trainer::TrainerConfig config;
  int checkpoint_every = 10;
  std::vector<PromptSource> prompts;
  std::optional<std::filesystem::path> init_checkpoint;
};

struct EvalSection {
  std::vector<MethodSpec> methods;
  std::vector<PromptSource> datasets;
  int images_per_prompt = 1;
  double detection_threshold = 0.0;
  PluginSpec feature_extractor{"raw_pixels"};
  std::optional<PluginSpec> aesthetic;
  // Method whose images serve as the Frechet reference; no Frechet column when unset.
  std::optional<std::string> frechet_reference;
  double frechet_shrinkage = 1e-6;
};

struct I2ISection {
  std::vector<MethodSpec> methods;
  std::optional<std::filesystem::path> input_dir;
  int outputs_per_input = 5;
  double strength = 0.5;
  std::string prompt;  // conditioning text; empty means no content
  double detection_threshold = 0.0;
};

struct AttackSection {
  std::vector<MethodSpec> methods;
  std::vector<PromptSource> prompts;
  attack::AttackConfig search;  // vocabulary and seed are filled at run time
  std::vector<std::string> vocabulary;
  std::optional<std::filesystem::path> vocabulary_file;
  int seeds = 5;
  double detection_threshold = 0.0;
};

struct IoSection {
  std::filesystem::path out = "runs/default";
};

struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  int workers = 1;
  PolicySection policy;
  LoraSection lora;
  RewardSection reward;
  TrainerSection trainer;
  EvalSection eval;
  I2ISection i2i;
  AttackSection attack;
  IoSection io;
  // Directory that relative paths resolve against. Not serialized.
  std::filesystem::path base_dir = ".";

  static RunConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = ".");
  nlohmann::json to_json() const;

  /// Cross-field checks; run before any compute.
  void validate() const;

  /// sha256 of the canonical JSON with `workers` and `io.out` removed, since
  /// neither changes results.
  std::string hash() const;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

RunConfig load_run_config(const std::filesystem::path& path);

/// Command-line and environment overrides; unset fields leave the file value.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::filesystem::path> out;
};

/// SAFETUNE_SEED, SAFETUNE_WORKERS, SAFETUNE_OUT.
Overrides overrides_from_env();

/// Applies env then flags on top of the file, so flag > env > file.
void apply_overrides(RunConfig& config, const Overrides& env, const Overrides& flags);

PromptPool load_prompt_source(const PromptSource& source, const RunConfig& config);

}  // namespace safetune::pipeline
