// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/reward/reward_engine.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"

namespace safetune::reward {

std::string image_id(const Image& image) { return sha256_hex(image.bytes()).substr(0, 12); }

double nudity_penalty(std::span<const DetectionResult> detections, const ClassWeightTable& weights) {
  std::vector<std::string> unknown;
  double sum = 0.0;
  for (const auto& d : detections) {
    if (!weights.contains(d.class_label)) {
      unknown.push_back(d.class_label);
      continue;
    }
    if (weights.is_unsafe(d.class_label)) sum += weights.weight(d.class_label) * d.score;
  }
  if (!unknown.empty()) {
    throw InvalidArgument(fmt::format("unknown detection classes: {}", fmt::join(unknown, ", ")));
  }
  return std::min(1.0, sum);
}

double nudity_reward(std::span<const DetectionResult> detections, const ClassWeightTable& weights) {
  return 1.0 - nudity_penalty(detections, weights);
}

double alignment_reward(const Image& image, std::string_view text, const AlignerPlugin& aligner) {
  double raw;
  try {
    raw = aligner.align(image, text);
  } catch (const std::exception& e) {
    throw Error(fmt::format("aligner '{}' failed on image {} with prompt '{}': {}", aligner.name(), image_id(image),
                            text, e.what()));
  }
  if (std::isnan(raw)) {
    throw Error(fmt::format("aligner '{}' returned NaN on image {} with prompt '{}'", aligner.name(), image_id(image),
                            text));
  }
  return std::clamp(raw / 100.0, 0.0, 1.0);
}

double alignment_reward(const Image& image, const policy::PromptContext& context, const AlignerPlugin& aligner) {
  return alignment_reward(image, context.text, aligner);
}

namespace {

std::optional<FaceAnalysis> analyze_face(const Image& image, const FaceAnalyzerPlugin& analyzer) {
  try {
    return analyzer.analyze(image);
  } catch (const std::exception& e) {
    throw Error(fmt::format("face analyzer '{}' failed on image {}: {}", analyzer.name(), image_id(image), e.what()));
  }
}

double squash(double distance, double tau) {
  if (!(tau > 0.0)) throw InvalidArgument("face distance scale tau must be positive");
  return std::tanh(distance / tau);
}

}  // namespace

double face_landmark_reward(const Image& image, const Eigen::VectorXd& reference_landmarks,
                            const FaceAnalyzerPlugin& analyzer, double tau) {
  const auto face = analyze_face(image, analyzer);
  if (!face) return 1.0;
  if (face->landmarks.size() != reference_landmarks.size()) {
    throw InvalidArgument("landmark vector does not match the reference dimension");
  }
  return squash((face->landmarks - reference_landmarks).norm(), tau);
}

double face_age_reward(const Image& image, double reference_age, const FaceAnalyzerPlugin& analyzer, double tau) {
  const auto face = analyze_face(image, analyzer);
  if (!face) return 1.0;
  return squash(std::abs(face->age - reference_age), tau);
}

double face_embedding_reward(const Image& image, const Eigen::VectorXd& reference_embedding,
                             const FaceAnalyzerPlugin& analyzer, double tau) {
  const auto face = analyze_face(image, analyzer);
  if (!face) return 1.0;
  if (face->embedding.size() != reference_embedding.size()) {
    throw InvalidArgument("face embedding does not match the reference dimension");
  }
  const double denom = face->embedding.norm() * reference_embedding.norm();
  const double cosine = denom > 0.0 ? face->embedding.dot(reference_embedding) / denom : 0.0;
  return squash(std::max(0.0, 1.0 - cosine), tau);
}

void RewardConfig::validate() const {
  if (!(lambda_align >= 0.0) || !(lambda_nudity >= 0.0) || !(face.lambda_landmark >= 0.0) ||
      !(face.lambda_age >= 0.0) || !(face.lambda_embedding >= 0.0)) {
    throw InvalidArgument("reward weights (lambda) must be >= 0");
  }
  if (!(face.tau > 0.0)) throw InvalidArgument("face distance scale tau must be positive");
  if (face.lambda_landmark > 0.0 && !face.reference_landmarks) throw InvalidArgument("landmark reward needs reference landmarks");
  if (face.lambda_age > 0.0 && !face.reference_age) throw InvalidArgument("age reward needs a reference age");
  if (face.lambda_embedding > 0.0 && !face.reference_embedding) throw InvalidArgument("embedding reward needs a reference embedding");
}

double RewardBreakdown::recompute_total(const RewardConfig& config) const {
  double t = config.lambda_align * alignment_term + config.lambda_nudity * nudity_term;
  const auto add = [&](const char* key, double lambda) {
    if (auto it = face_terms.find(key); it != face_terms.end()) t += lambda * it->second;
  };
  add("landmark", config.face.lambda_landmark);
  add("age", config.face.lambda_age);
  add("embedding", config.face.lambda_embedding);
  return t;
}

nlohmann::json RewardBreakdown::to_json() const {
  return {{"nudity", nudity_term},
          {"alignment", alignment_term},
          {"face", face_terms},
          {"total", total},
          {"per_class", per_class}};
}

RewardEngine::RewardEngine(RewardConfig config, ClassWeightTable weights,
                           std::shared_ptr<PluginPool<DetectorPlugin>> detectors,
                           std::shared_ptr<PluginPool<AlignerPlugin>> aligners,
                           std::shared_ptr<PluginPool<FaceAnalyzerPlugin>> face_analyzers,
                           std::function<std::string(std::string_view)> sanitizer)
    : config_(std::move(config)),
      weights_(std::move(weights)),
      detectors_(std::move(detectors)),
      aligners_(std::move(aligners)),
      face_analyzers_(std::move(face_analyzers)),
      sanitizer_(std::move(sanitizer)) {
  config_.validate();
  weights_.validate();
  if (!detectors_ || !aligners_) throw InvalidArgument("reward engine needs a detector and an aligner");
  if (config_.face.enabled() && !face_analyzers_) throw InvalidArgument("face rewards enabled without a face analyzer");
  if (config_.align_against == AlignTarget::sanitized_prompt && !sanitizer_) {
    throw InvalidArgument("sanitized alignment target needs a prompt sanitizer");
  }
}

std::vector<DetectionResult> RewardEngine::detect(const Image& image) const {
  auto detector = detectors_->acquire();
  try {
    return detector->detect(image);
  } catch (const std::exception& e) {
    throw Error(fmt::format("detector '{}' failed on image {}: {}", detector->name(), image_id(image), e.what()));
  }
}

RewardBreakdown RewardEngine::composite_reward(const Image& image, const policy::PromptContext& context) const {
  RewardBreakdown out;
  const auto detections = detect(image);
  out.nudity_term = nudity_reward(detections, weights_);
  for (const auto& d : detections) out.per_class[d.class_label] += weights_.weight(d.class_label) * d.score;

  {
    auto aligner = aligners_->acquire();
    const std::string text =
        config_.align_against == AlignTarget::sanitized_prompt ? sanitizer_(context.text) : context.text;
    out.alignment_term = alignment_reward(image, text, *aligner);
  }

  if (config_.face.enabled()) {
    auto analyzer = face_analyzers_->acquire();
    const auto& f = config_.face;
    if (f.lambda_landmark > 0.0)
      out.face_terms["landmark"] = face_landmark_reward(image, *f.reference_landmarks, *analyzer, f.tau);
    if (f.lambda_age > 0.0) out.face_terms["age"] = face_age_reward(image, *f.reference_age, *analyzer, f.tau);
    if (f.lambda_embedding > 0.0)
      out.face_terms["embedding"] = face_embedding_reward(image, *f.reference_embedding, *analyzer, f.tau);
  }
  out.total = out.recompute_total(config_);
  return out;
}

}  // namespace safetune::reward
