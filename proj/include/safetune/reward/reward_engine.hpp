// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>

#include <json.hpp>

#include "safetune/policy/types.hpp"
#include "safetune/reward/detection.hpp"
#include "safetune/reward/plugins.hpp"

namespace safetune::reward {

/// min(1, sum over unsafe classes of w_c * s_c). Throws on labels missing from the table.
double nudity_penalty(std::span<const DetectionResult> detections, const ClassWeightTable& weights);

/// 1 - nudity_penalty; 1 means fully safe.
double nudity_reward(std::span<const DetectionResult> detections, const ClassWeightTable& weights);

/// Raw aligner score / 100, clamped to [0, 1].
double alignment_reward(const Image& image, const policy::PromptContext& context, const AlignerPlugin& aligner);
double alignment_reward(const Image& image, std::string_view text, const AlignerPlugin& aligner);

/// tanh(distance / tau) in [0, 1); a missing face scores 1.
double face_landmark_reward(const Image& image, const Eigen::VectorXd& reference_landmarks,
                            const FaceAnalyzerPlugin& analyzer, double tau = 1.0);
double face_age_reward(const Image& image, double reference_age, const FaceAnalyzerPlugin& analyzer,
                       double tau = 1.0);
/// Distance is the cosine distance 1 - cos(embedding, reference).
double face_embedding_reward(const Image& image, const Eigen::VectorXd& reference_embedding,
                             const FaceAnalyzerPlugin& analyzer, double tau = 1.0);

enum class AlignTarget { raw_prompt, sanitized_prompt };

struct FaceRewardConfig {
  double lambda_landmark = 0.0;
  double lambda_age = 0.0;
  double lambda_embedding = 0.0;
  double tau = 1.0;
  std::optional<Eigen::VectorXd> reference_landmarks;
  std::optional<double> reference_age;
  std::optional<Eigen::VectorXd> reference_embedding;

  bool enabled() const { return lambda_landmark > 0.0 || lambda_age > 0.0 || lambda_embedding > 0.0; }
};

struct RewardConfig {
  double lambda_align = 1.0;
  double lambda_nudity = 1.0;
  AlignTarget align_against = AlignTarget::raw_prompt;
  FaceRewardConfig face;

  void validate() const;
};

struct RewardBreakdown {
  double nudity_term = 0.0;
  double alignment_term = 0.0;
  std::map<std::string, double> face_terms;
  double total = 0.0;
  std::map<std::string, double> per_class;  // class -> w_c * s_c

  /// lambda_align * alignment + lambda_nudity * nudity + sum lambda_f * face_f.
  double recompute_total(const RewardConfig& config) const;
  nlohmann::json to_json() const;
};

/// Composite reward r(x0, c) over pluggable detector / aligner / face analyzer.
/// Pure given plugin outputs; safe to call from several threads.
class RewardEngine {
 public:
  RewardEngine(RewardConfig config, ClassWeightTable weights, std::shared_ptr<PluginPool<DetectorPlugin>> detectors,
               std::shared_ptr<PluginPool<AlignerPlugin>> aligners,
               std::shared_ptr<PluginPool<FaceAnalyzerPlugin>> face_analyzers = nullptr,
               std::function<std::string(std::string_view)> sanitizer = nullptr);

  RewardBreakdown composite_reward(const Image& image, const policy::PromptContext& context) const;

  /// Detector output alone; used by evaluation and by the text-agnostic checks.
  std::vector<DetectionResult> detect(const Image& image) const;

  const RewardConfig& config() const { return config_; }
  const ClassWeightTable& weights() const { return weights_; }

 private:
  RewardConfig config_;
  ClassWeightTable weights_;
  std::shared_ptr<PluginPool<DetectorPlugin>> detectors_;
  std::shared_ptr<PluginPool<AlignerPlugin>> aligners_;
  std::shared_ptr<PluginPool<FaceAnalyzerPlugin>> face_analyzers_;
  std::function<std::string(std::string_view)> sanitizer_;
};

/// Short content identifier for error messages and records.
std::string image_id(const Image& image);

}  // namespace safetune::reward
