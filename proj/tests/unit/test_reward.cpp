// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <set>
#include <thread>

#include <doctest.h>

#include "safetune/core/error.hpp"
#include "safetune/policy/toy_world.hpp"
#include "safetune/reward/reward_engine.hpp"
#include "safetune/reward/stubs.hpp"

using namespace safetune;
using namespace safetune::reward;

namespace {

class FixedAligner final : public AlignerPlugin {
 public:
  explicit FixedAligner(double raw) : raw_(raw) {}
  std::string name() const override { return "fixed"; }
  double align(const Image&, std::string_view) const override { return raw_; }

 private:
  double raw_;
};

class FixedDetector final : public DetectorPlugin {
 public:
  explicit FixedDetector(std::vector<DetectionResult> out) : out_(std::move(out)) {}
  std::string name() const override { return "fixed"; }
  std::vector<DetectionResult> detect(const Image&) const override { return out_; }
  std::vector<ClassInfo> classes() const override { return {{"a", true}, {"b", true}, {"face", false}}; }

 private:
  std::vector<DetectionResult> out_;
};

class FixedFace final : public FaceAnalyzerPlugin {
 public:
  explicit FixedFace(std::optional<FaceAnalysis> a) : a_(std::move(a)) {}
  std::string name() const override { return "fixed_face"; }
  std::optional<FaceAnalysis> analyze(const Image&) const override { return a_; }

 private:
  std::optional<FaceAnalysis> a_;
};

ClassWeightTable weights_ab(double wa, double wb) {
  ClassWeightTable t;
  t.set("a", wa, true);
  t.set("b", wb, true);
  t.set("face", 1.0, false);
  return t;
}

Image gray(double v = 0.5) { return {{1, 4, 4}, Eigen::VectorXd::Constant(16, v)}; }

}  // namespace

TEST_CASE("nudity penalty is a saturated weighted sum") {
  const auto w = weights_ab(0.9, 0.8);
  CHECK(nudity_penalty({}, w) == 0.0);
  CHECK(nudity_penalty(std::vector<DetectionResult>{{"a", 0.8}}, weights_ab(1.0, 1.0)) == doctest::Approx(0.8));
  CHECK(nudity_penalty(std::vector<DetectionResult>{{"a", 0.7}, {"b", 0.6}}, w) == 1.0);  // min(1, 0.63 + 0.48)
  CHECK(nudity_penalty(std::vector<DetectionResult>{{"face", 0.9}}, w) == 0.0);
  CHECK_THROWS_AS(nudity_penalty(std::vector<DetectionResult>{{"zzz", 0.5}}, w), InvalidArgument);
}

TEST_CASE("nudity reward complements the penalty") {
  const auto w = weights_ab(1.0, 1.0);
  CHECK(nudity_reward({}, w) == 1.0);
  CHECK(nudity_reward(std::vector<DetectionResult>{{"a", 1.0}}, w) == 0.0);
  CHECK(nudity_reward(std::vector<DetectionResult>{{"a", 0.35}}, w) == doctest::Approx(0.65));
}

TEST_CASE("detection scores are clamped into [0, 1]") {
  CHECK(DetectionResult("a", 1.7).score == 1.0);
  CHECK(DetectionResult("a", -0.2).score == 0.0);
}

TEST_CASE("alignment reward normalizes and clamps the raw score") {
  CHECK(alignment_reward(gray(), "x", FixedAligner(26.39)) == doctest::Approx(0.2639));
  CHECK(alignment_reward(gray(), "x", FixedAligner(0.0)) == 0.0);
  CHECK(alignment_reward(gray(), "x", FixedAligner(120.0)) == 1.0);
  CHECK(alignment_reward(gray(), "x", FixedAligner(-5.0)) == 0.0);
}

TEST_CASE("face rewards squash the distance with tanh") {
  FaceAnalysis at_ref{Eigen::Vector2d(1.0, 2.0), 30.0, Eigen::Vector2d(1.0, 0.0)};
  const FixedFace same(at_ref);
  CHECK(face_landmark_reward(gray(), at_ref.landmarks, same) == 0.0);
  CHECK(face_age_reward(gray(), 30.0, same) == 0.0);
  CHECK(face_embedding_reward(gray(), at_ref.embedding, same) == doctest::Approx(0.0));

  const FixedFace none(std::nullopt);
  CHECK(face_landmark_reward(gray(), at_ref.landmarks, none) == 1.0);
  CHECK(face_age_reward(gray(), 30.0, none) == 1.0);
  CHECK(face_embedding_reward(gray(), at_ref.embedding, none) == 1.0);

  // Distance equal to tau.
  CHECK(face_landmark_reward(gray(), Eigen::Vector2d(1.0, 4.0), same, 2.0) == doctest::Approx(std::tanh(1.0)));
  CHECK(face_age_reward(gray(), 33.0, same, 3.0) == doctest::Approx(0.7616).epsilon(1e-4));
  // Orthogonal embeddings: cosine distance 1.
  CHECK(face_embedding_reward(gray(), Eigen::Vector2d(0.0, 5.0), same, 1.0) == doctest::Approx(std::tanh(1.0)));
}

TEST_CASE("composite reward combines the weighted terms") {
  auto detectors = std::make_shared<PluginPool<DetectorPlugin>>(
      [] { return std::make_unique<FixedDetector>(std::vector<DetectionResult>{}); });
  auto aligners = std::make_shared<PluginPool<AlignerPlugin>>([] { return std::make_unique<FixedAligner>(50.0); });
  const policy::PromptContext ctx{"p", Eigen::VectorXd::Zero(2), policy::PromptTag::unknown};

  RewardConfig both;
  const RewardEngine e1(both, weights_ab(1, 1), detectors, aligners);
  const auto r1 = e1.composite_reward(gray(), ctx);
  CHECK(r1.total == doctest::Approx(1.5));
  CHECK(r1.nudity_term == 1.0);
  CHECK(r1.alignment_term == doctest::Approx(0.5));
  CHECK(r1.recompute_total(both) == doctest::Approx(r1.total));

  RewardConfig nud_only;
  nud_only.lambda_align = 0.0;
  CHECK(RewardEngine(nud_only, weights_ab(1, 1), detectors, aligners).composite_reward(gray(), ctx).total == 1.0);

  RewardConfig align_only;
  align_only.lambda_nudity = 0.0;
  CHECK(RewardEngine(align_only, weights_ab(1, 1), detectors, aligners).composite_reward(gray(), ctx).total ==
        doctest::Approx(0.5));

  RewardConfig bad;
  bad.lambda_align = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("composite reward reports per-class contributions") {
  auto detectors = std::make_shared<PluginPool<DetectorPlugin>>([] {
    return std::make_unique<FixedDetector>(std::vector<DetectionResult>{{"a", 0.5}, {"face", 0.9}});
  });
  auto aligners = std::make_shared<PluginPool<AlignerPlugin>>([] { return std::make_unique<FixedAligner>(0.0); });
  const RewardEngine e(RewardConfig{}, weights_ab(0.4, 1), detectors, aligners);
  const auto r = e.composite_reward(gray(), {"p", Eigen::VectorXd::Zero(2), policy::PromptTag::unknown});
  CHECK(r.per_class.at("a") == doctest::Approx(0.2));
  CHECK(r.nudity_term == doctest::Approx(0.8));
}

TEST_CASE("class weight tables merge and validate") {
  auto t = ClassWeightTable::from_classes({{"x", true}, {"y", false}});
  t.merge(ClassWeightTable::from_json({{"x", {{"weight", 0.5}}}, {"z", {{"weight", 2.0}, {"unsafe", true}}}}));
  CHECK(t.weight("x") == 0.5);
  CHECK(t.weight("z") == 2.0);
  CHECK(t.unsafe_classes() == std::set<std::string>{"x", "z"});
  CHECK_NOTHROW(t.validate());
  CHECK_THROWS_AS(ClassWeightTable::from_json({{"x", {{"wieght", 1}}}}), InvalidArgument);
  CHECK_THROWS_AS(ClassWeightTable::from_classes({{"y", false}}).validate(), InvalidArgument);
}

TEST_CASE("stub quadrant detector reports the quadrant mean") {
  const policy::LatentShape shape{1, 8, 8};
  const StubQuadrantDetector det(shape, policy::Quadrant::top_left);
  Image img{shape, Eigen::VectorXd::Constant(64, 0.5)};
  CHECK(det.detect(img).empty());
  for (int i : policy::quadrant_indices(shape, policy::Quadrant::top_left)) img.pixels[i] = 0.8;
  const auto found = det.detect(img);
  REQUIRE(found.size() == 1);
  CHECK(found[0].class_label == kSyntheticUnsafe);
  CHECK(found[0].score == doctest::Approx(0.8));
  for (int i : policy::quadrant_indices(shape, policy::Quadrant::top_left)) img.pixels[i] = 0.1;
  const auto covered = det.detect(img);
  REQUIRE(covered.size() == 1);
  CHECK(covered[0].class_label == kSyntheticCovered);
  CHECK(covered[0].score == doctest::Approx(0.9));
}

TEST_CASE("plugin pools share or lend instances") {
  struct Exclusive final : AlignerPlugin {
    std::string name() const override { return "exclusive"; }
    bool shareable() const override { return false; }
    double align(const Image&, std::string_view) const override { return 0; }
  };
  PluginPool<AlignerPlugin> exclusive([] { return std::make_unique<Exclusive>(); });
  {
    auto a = exclusive.acquire();
    auto b = exclusive.acquire();
    CHECK(&*a != &*b);
  }
  PluginPool<AlignerPlugin> shared([] { return std::make_unique<FixedAligner>(1.0); });
  CHECK(&*shared.acquire() == &*shared.acquire());
  CHECK(shared.name() == "fixed");
}
