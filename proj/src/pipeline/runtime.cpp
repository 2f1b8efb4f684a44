// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/pipeline/runtime.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "safetune/core/error.hpp"
#include "safetune/pipeline/checkpoint.hpp"
#include "safetune/reward/stubs.hpp"

namespace safetune::pipeline {

namespace {

using nlohmann::json;

void require_no_options(const json& options, const std::string& plugin) {
  if (!options.empty()) throw InvalidArgument(fmt::format("plugin '{}' takes no options", plugin));
}

template <typename P>
std::shared_ptr<reward::PluginPool<P>> build(const std::map<std::string, PluginFactory<P>>& table,
                                             const PluginSpec& spec, const PluginContext& ctx, const char* kind) {
  const auto it = table.find(spec.name);
  if (it == table.end()) {
    std::vector<std::string> known;
    for (const auto& [name, f] : table) known.push_back(name);
    throw InvalidArgument(fmt::format("unknown {} plugin '{}' (known: {})", kind, spec.name, fmt::join(known, ", ")));
  }
  const auto factory = it->second;
  const json options = spec.options;
  return std::make_shared<reward::PluginPool<P>>([factory, options, ctx] { return factory(options, ctx); });
}

std::unique_ptr<reward::DetectorPlugin> make_quadrant_detector(const json& options, const PluginContext& ctx) {
  policy::Quadrant quadrant = ctx.world.config().unsafe_region;
  double emit_floor = 0.6;
  for (const auto& [key, value] : options.items()) {
    if (key == "quadrant") {
      quadrant = policy::parse_quadrant(value.get<std::string>());
    } else if (key == "emit_floor") {
      emit_floor = value.get<double>();
    } else {
      throw InvalidArgument(fmt::format("plugin 'stub_quadrant' has no option '{}'", key));
    }
  }
  return std::make_unique<reward::StubQuadrantDetector>(ctx.model.shape, quadrant, emit_floor);
}

void check_compatible(const policy::PolicyConfig& got, const policy::PolicyConfig& want, const std::string& where) {
  if (!(got.shape == want.shape) || got.context_dim != want.context_dim)
    throw InvalidArgument(fmt::format("checkpoint '{}' has shape {}x{}x{} / context {} but the config expects {}x{}x{} / {}",
                                      where, got.shape.channels, got.shape.height, got.shape.width, got.context_dim,
                                      want.shape.channels, want.shape.height, want.shape.width, want.context_dim));
}

}  // namespace

PluginRegistry PluginRegistry::with_builtins() {
  PluginRegistry r;
  r.add("stub_quadrant", PluginFactory<reward::DetectorPlugin>(make_quadrant_detector));
  r.add("stub_pattern", PluginFactory<reward::AlignerPlugin>([](const json& o, const PluginContext& ctx) {
          require_no_options(o, "stub_pattern");
          return std::make_unique<reward::StubPatternAligner>(ctx.world, ctx.encoder);
        }));
  r.add("stub_face", PluginFactory<reward::FaceAnalyzerPlugin>([](const json& o, const PluginContext&) {
          require_no_options(o, "stub_face");
          return std::make_unique<reward::StubFaceAnalyzer>();
        }));
  r.add("stub_contrast", PluginFactory<reward::AestheticPlugin>([](const json& o, const PluginContext&) {
          require_no_options(o, "stub_contrast");
          return std::make_unique<reward::StubContrastAesthetic>();
        }));
  r.add("raw_pixels", PluginFactory<reward::FeatureExtractorPlugin>([](const json& o, const PluginContext&) {
          require_no_options(o, "raw_pixels");
          return std::make_unique<reward::PixelFeatureExtractor>();
        }));
  return r;
}

std::shared_ptr<reward::PluginPool<reward::DetectorPlugin>> PluginRegistry::detector(const PluginSpec& s,
                                                                                     const PluginContext& c) const {
  return build(detectors_, s, c, "detector");
}
std::shared_ptr<reward::PluginPool<reward::AlignerPlugin>> PluginRegistry::aligner(const PluginSpec& s,
                                                                                   const PluginContext& c) const {
  return build(aligners_, s, c, "aligner");
}
std::shared_ptr<reward::PluginPool<reward::FaceAnalyzerPlugin>> PluginRegistry::face_analyzer(
    const PluginSpec& s, const PluginContext& c) const {
  return build(faces_, s, c, "face analyzer");
}
std::shared_ptr<reward::PluginPool<reward::AestheticPlugin>> PluginRegistry::aesthetic(const PluginSpec& s,
                                                                                       const PluginContext& c) const {
  return build(aesthetics_, s, c, "aesthetic");
}
std::shared_ptr<reward::PluginPool<reward::FeatureExtractorPlugin>> PluginRegistry::feature_extractor(
    const PluginSpec& s, const PluginContext& c) const {
  return build(features_, s, c, "feature extractor");
}

std::filesystem::path Runtime::resolve(const std::filesystem::path& p) const {
  auto it = p.begin();
  if (it != p.end() && *it == "{out}") {
    std::filesystem::path rest;
    for (++it; it != p.end(); ++it) rest /= *it;
    return out_dir() / rest;
  }
  return config.resolve(p);
}

policy::DenoisingPolicy Runtime::base_policy() const {
  return policy::make_toy_base_policy(context.model, context.world);
}

policy::DenoisingPolicy Runtime::method_policy(const MethodSpec& method) const {
  if (!method.checkpoint) return base_policy();
  const auto path = resolve(*method.checkpoint);
  auto state = checkpoint_load(path);
  check_compatible(state.policy.config(), context.model, path.string());
  return std::move(state.policy);
}

Runtime make_runtime(RunConfig config, PluginRegistry registry) {
  config.validate();
  policy::TextEncoderConfig enc = config.policy.encoder;
  enc.context_dim = config.policy.model.context_dim;
  PluginContext ctx{config.policy.model,
                    policy::ToyWorld(config.policy.model.shape, config.policy.model.context_dim, config.policy.world),
                    policy::ToyTextEncoder(enc)};

  Runtime rt{config, config.hash(), ctx, {}, nullptr, nullptr, nullptr, nullptr, std::move(registry)};
  rt.detectors = rt.registry.detector(config.reward.detector, ctx);
  rt.aligners = rt.registry.aligner(config.reward.aligner, ctx);
  if (config.reward.face_analyzer) rt.face_analyzers = rt.registry.face_analyzer(*config.reward.face_analyzer, ctx);
  if (config.reward.weights.face.enabled() && !rt.face_analyzers)
    throw InvalidArgument("face reward weights are set but reward.face_analyzer is not configured");

  rt.class_weights = reward::ClassWeightTable::from_classes(rt.detectors->acquire()->classes());
  const json& cw = config.reward.class_weights;
  if (cw.is_string()) {
    rt.class_weights.merge(reward::ClassWeightTable::load(config.resolve(cw.get<std::string>())));
  } else if (cw.is_object()) {
    rt.class_weights.merge(reward::ClassWeightTable::from_json(cw));
  }
  rt.class_weights.validate();

  const policy::ToyTextEncoder encoder = ctx.encoder;
  rt.engine = std::make_shared<reward::RewardEngine>(
      config.reward.weights, rt.class_weights, rt.detectors, rt.aligners, rt.face_analyzers,
      [encoder](std::string_view text) { return encoder.sanitize(text); });
  return rt;
}

}  // namespace safetune::pipeline
