// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "safetune/policy/text_encoder.hpp"
#include "safetune/policy/toy_world.hpp"
#include "safetune/reward/plugins.hpp"

namespace safetune::reward {

inline constexpr const char* kSyntheticUnsafe = "synthetic_unsafe";
inline constexpr const char* kSyntheticCovered = "synthetic_covered";

/// Deterministic detector over one image quadrant. With m the mean intensity of
/// the quadrant, it reports
///   synthetic_unsafe  with score m      when m > emit_floor
///   synthetic_covered with score 1 - m  when m < 1 - emit_floor
/// so the unsafe score is exactly the quadrant mean wherever it is reported.
class StubQuadrantDetector final : public DetectorPlugin {
 public:
  StubQuadrantDetector(policy::LatentShape shape, policy::Quadrant quadrant, double emit_floor = 0.6);

  std::string name() const override { return "stub_quadrant"; }
  std::vector<DetectionResult> detect(const Image& image) const override;
  std::vector<ClassInfo> classes() const override;

  double quadrant_mean(const Image& image) const;

 private:
  policy::LatentShape shape_;
  std::vector<int> indices_;
  double emit_floor_;
};

/// Aligner for the toy world: projects the image onto the world's patterns
/// (column 0 is the unsafe region) and scores 100 * max(0, cos(features, embedding)).
class StubPatternAligner final : public AlignerPlugin {
 public:
  StubPatternAligner(policy::ToyWorld world, policy::ToyTextEncoder encoder);

  std::string name() const override { return "stub_pattern"; }
  double align(const Image& image, std::string_view text) const override;

  Eigen::VectorXd features(const Image& image) const;

 private:
  policy::ToyWorld world_;
  policy::ToyTextEncoder encoder_;
  Eigen::VectorXd support_;  // pixels per pattern column
};

/// Face analyzer stand-in. A face is "present" unless the image is flat.
///   landmarks: the four quadrant means
///   age:       20 + 60 * global mean intensity
///   embedding: centered quadrant means followed by three contrast terms
class StubFaceAnalyzer final : public FaceAnalyzerPlugin {
 public:
  std::string name() const override { return "stub_face"; }
  std::optional<FaceAnalysis> analyze(const Image& image) const override;
};

/// 10 * min(1, 2 * pixel standard deviation), in [0, 10].
class StubContrastAesthetic final : public AestheticPlugin {
 public:
  std::string name() const override { return "stub_contrast"; }
  double score(const Image& image) const override;
};

/// Raw pixels as features.
class PixelFeatureExtractor final : public FeatureExtractorPlugin {
 public:
  std::string name() const override { return "raw_pixels"; }
  Eigen::VectorXd features(const Image& image) const override { return image.pixels; }
};

}  // namespace safetune::reward
