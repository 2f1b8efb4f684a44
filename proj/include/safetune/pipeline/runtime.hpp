// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "safetune/pipeline/config.hpp"
#include "safetune/policy/denoising_policy.hpp"
#include "safetune/policy/text_encoder.hpp"
#include "safetune/policy/toy_world.hpp"
#include "safetune/reward/plugins.hpp"
#include "safetune/reward/reward_engine.hpp"

namespace safetune::pipeline {

/// What a plugin factory may consult besides its own options.
struct PluginContext {
  policy::PolicyConfig model;
  policy::ToyWorld world;
  policy::ToyTextEncoder encoder;
};

template <typename P>
using PluginFactory = std::function<std::unique_ptr<P>(const nlohmann::json& options, const PluginContext&)>;

/// Name -> factory tables for every plugin kind. Unknown names are errors that
/// list the registered alternatives.
class PluginRegistry {
 public:
  /// stub_quadrant, stub_pattern, stub_face, stub_contrast, raw_pixels.
  static PluginRegistry with_builtins();

  void add(std::string name, PluginFactory<reward::DetectorPlugin> f) { detectors_[std::move(name)] = std::move(f); }
  void add(std::string name, PluginFactory<reward::AlignerPlugin> f) { aligners_[std::move(name)] = std::move(f); }
  void add(std::string name, PluginFactory<reward::FaceAnalyzerPlugin> f) { faces_[std::move(name)] = std::move(f); }
  void add(std::string name, PluginFactory<reward::AestheticPlugin> f) { aesthetics_[std::move(name)] = std::move(f); }
  void add(std::string name, PluginFactory<reward::FeatureExtractorPlugin> f) { features_[std::move(name)] = std::move(f); }

  std::shared_ptr<reward::PluginPool<reward::DetectorPlugin>> detector(const PluginSpec&, const PluginContext&) const;
  std::shared_ptr<reward::PluginPool<reward::AlignerPlugin>> aligner(const PluginSpec&, const PluginContext&) const;
  std::shared_ptr<reward::PluginPool<reward::FaceAnalyzerPlugin>> face_analyzer(const PluginSpec&,
                                                                                 const PluginContext&) const;
  std::shared_ptr<reward::PluginPool<reward::AestheticPlugin>> aesthetic(const PluginSpec&, const PluginContext&) const;
  std::shared_ptr<reward::PluginPool<reward::FeatureExtractorPlugin>> feature_extractor(const PluginSpec&,
                                                                                         const PluginContext&) const;

 private:
  std::map<std::string, PluginFactory<reward::DetectorPlugin>> detectors_;
  std::map<std::string, PluginFactory<reward::AlignerPlugin>> aligners_;
  std::map<std::string, PluginFactory<reward::FaceAnalyzerPlugin>> faces_;
  std::map<std::string, PluginFactory<reward::AestheticPlugin>> aesthetics_;
  std::map<std::string, PluginFactory<reward::FeatureExtractorPlugin>> features_;
};

/// A validated config with its plugins and reward engine instantiated.
struct Runtime {
  RunConfig config;
  std::string config_hash;
  PluginContext context;
  reward::ClassWeightTable class_weights;
  std::shared_ptr<reward::PluginPool<reward::DetectorPlugin>> detectors;
  std::shared_ptr<reward::PluginPool<reward::AlignerPlugin>> aligners;
  std::shared_ptr<reward::PluginPool<reward::FaceAnalyzerPlugin>> face_analyzers;  // may be null
  std::shared_ptr<reward::RewardEngine> engine;
  PluginRegistry registry;

  /// io.out resolved against the config directory.
  std::filesystem::path out_dir() const { return config.resolve(config.io.out); }
  /// Resolves a config path; a leading "{out}" component stands for out_dir().
  std::filesystem::path resolve(const std::filesystem::path& p) const;

  /// The hand-built toy policy standing in for the pre-trained model.
  policy::DenoisingPolicy base_policy() const;
  /// The checkpoint named by the method, or the base policy when it has none.
  policy::DenoisingPolicy method_policy(const MethodSpec& method) const;
};

/// Validates the config, then builds plugins. Nothing is computed before
/// validation succeeds.
Runtime make_runtime(RunConfig config, PluginRegistry registry = PluginRegistry::with_builtins());

}  // namespace safetune::pipeline
