// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/reward/stubs.hpp"

#include <cmath>

#include "safetune/core/error.hpp"

namespace safetune::reward {

StubQuadrantDetector::StubQuadrantDetector(policy::LatentShape shape, policy::Quadrant quadrant, double emit_floor)
    : shape_(shape), indices_(policy::quadrant_indices(shape, quadrant)), emit_floor_(emit_floor) {
  if (!(emit_floor >= 0.0 && emit_floor < 1.0)) throw InvalidArgument("detector emit floor must be in [0, 1)");
}

double StubQuadrantDetector::quadrant_mean(const Image& image) const {
  if (!(image.shape == shape_)) throw InvalidArgument("image shape does not match the detector");
  double sum = 0.0;
  for (int i : indices_) sum += image.pixels[i];
  return sum / static_cast<double>(indices_.size());
}

std::vector<DetectionResult> StubQuadrantDetector::detect(const Image& image) const {
  const double m = quadrant_mean(image);
  std::vector<DetectionResult> out;
  if (m > emit_floor_) out.emplace_back(kSyntheticUnsafe, m);
  if (m < 1.0 - emit_floor_) out.emplace_back(kSyntheticCovered, 1.0 - m);
  return out;
}

std::vector<ClassInfo> StubQuadrantDetector::classes() const {
  return {{kSyntheticUnsafe, true}, {kSyntheticCovered, false}};
}

StubPatternAligner::StubPatternAligner(policy::ToyWorld world, policy::ToyTextEncoder encoder)
    : world_(std::move(world)), encoder_(std::move(encoder)) {
  if (world_.patterns().cols() != encoder_.context_dim()) {
    throw InvalidArgument("aligner world and text encoder disagree on the context dimension");
  }
  support_ = world_.patterns().cwiseAbs().colwise().sum().transpose();
}

Eigen::VectorXd StubPatternAligner::features(const Image& image) const {
  if (!(image.shape == world_.shape())) throw InvalidArgument("image shape does not match the aligner world");
  const Eigen::VectorXd centered = image.pixels.array() - 0.5;
  Eigen::VectorXd f = world_.patterns().transpose() * centered;
  for (Eigen::Index k = 0; k < f.size(); ++k)
    if (support_[k] > 0.0) f[k] /= support_[k];
  return f;
}

double StubPatternAligner::align(const Image& image, std::string_view text) const {
  const Eigen::VectorXd f = features(image);
  const Eigen::VectorXd e = encoder_.embed(text);
  const double denom = f.norm() * e.norm();
  if (denom <= 0.0) return 0.0;
  return 100.0 * std::max(0.0, f.dot(e) / denom);
}

std::optional<FaceAnalysis> StubFaceAnalyzer::analyze(const Image& image) const {
  const double mean = image.pixels.mean();
  const double var = (image.pixels.array() - mean).square().mean();
  if (var < 1e-6) return std::nullopt;
  Eigen::VectorXd q(4);
  const policy::Quadrant quads[] = {policy::Quadrant::top_left, policy::Quadrant::top_right,
                                    policy::Quadrant::bottom_left, policy::Quadrant::bottom_right};
  for (int i = 0; i < 4; ++i) {
    double s = 0.0;
    const auto idx = policy::quadrant_indices(image.shape, quads[i]);
    for (int j : idx) s += image.pixels[j];
    q[i] = s / static_cast<double>(idx.size());
  }
  FaceAnalysis out;
  out.landmarks = q;
  out.age = 20.0 + 60.0 * mean;
  out.embedding.resize(7);
  out.embedding << q.array() - 0.5, (q[0] + q[1]) - (q[2] + q[3]), (q[0] + q[2]) - (q[1] + q[3]),
      (q[0] + q[3]) - (q[1] + q[2]);
  return out;
}

double StubContrastAesthetic::score(const Image& image) const {
  const double mean = image.pixels.mean();
  const double sd = std::sqrt((image.pixels.array() - mean).square().mean());
  return 10.0 * std::min(1.0, 2.0 * sd);
}

}  // namespace safetune::reward
