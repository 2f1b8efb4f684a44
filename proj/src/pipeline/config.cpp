// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/pipeline/config.hpp"

#include <cstdlib>
#include <set>

#include <fmt/format.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"

namespace safetune::pipeline {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects whatever was not read.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidArgument(fmt::format("config '{}' must be an object", path_));
  }
  Reader(const Reader&) = delete;

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw InvalidArgument(fmt::format("unknown config key '{}'", where(key)));
    }
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    if (const json* v = find(key)) out = convert<T>(*v, where(key));
  }

  template <typename T>
  void get(const std::string& key, std::optional<T>& out) {
    if (const json* v = find(key)) out = v->is_null() ? std::nullopt : std::optional<T>(convert<T>(*v, where(key)));
  }

  template <typename T, typename Parse>
  void get_enum(const std::string& key, T& out, Parse parse) {
    if (const json* v = find(key)) {
      try {
        out = parse(convert<std::string>(*v, where(key)));
      } catch (const InvalidArgument& e) {
        throw InvalidArgument(fmt::format("{}: {}", where(key), e.what()));
      }
    }
  }

  template <typename T>
  static T convert(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, std::filesystem::path>) {
        return std::filesystem::path(v.get<std::string>());
      } else {
        return v.get<T>();
      }
    } catch (const json::exception& e) {
      throw InvalidArgument(fmt::format("config '{}' has the wrong type ({})", where, v.type_name()));
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json opt_json(const std::optional<std::filesystem::path>& p) { return p ? json(p->generic_string()) : json(nullptr); }

template <typename T>
json opt_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

// ---- prompt sources, plugins, methods ----

json to_json(const PromptSource& s) {
  json j = {{"name", s.name}};
  if (s.synthetic) {
    j["synthetic"] = {{"n", s.synthetic->n}, {"kind", policy::to_string(s.synthetic->kind)},
                      {"seed", s.synthetic->seed}};
  } else {
    j["path"] = opt_json(s.path);
    j["format"] = s.load.format == PromptFormat::csv ? "csv" : "lines";
    j["column"] = s.load.column;
    j["tag_column"] = s.load.tag_column;
    j["tag"] = policy::to_string(s.load.default_tag);
  }
  return j;
}

PromptSource prompt_source_from_json(const json& j, const std::string& path) {
  PromptSource s;
  Reader r(j, path);
  r.get("name", s.name);
  r.get("path", s.path);
  r.get_enum("format", s.load.format, [](const std::string& f) {
    if (f == "lines") return PromptFormat::lines;
    if (f == "csv") return PromptFormat::csv;
    throw InvalidArgument(fmt::format("unknown prompt format '{}'", f));
  });
  r.get("column", s.load.column);
  r.get("tag_column", s.load.tag_column);
  r.get_enum("tag", s.load.default_tag, policy::parse_prompt_tag);
  if (const json* syn = r.find("synthetic"); syn && !syn->is_null()) {
    Reader sr(*syn, r.where("synthetic"));
    SyntheticPrompts sp;
    sr.get("n", sp.n);
    sr.get_enum("kind", sp.kind, policy::parse_prompt_tag);
    sr.get("seed", sp.seed);
    sr.finish();
    s.synthetic = sp;
  }
  r.finish();
  if (s.name.empty()) throw InvalidArgument(fmt::format("config '{}' needs a name", path));
  if (s.path.has_value() == s.synthetic.has_value())
    throw InvalidArgument(fmt::format("config '{}' needs exactly one of 'path' or 'synthetic'", path));
  return s;
}

json to_json(const std::vector<PromptSource>& v) {
  json a = json::array();
  for (const auto& s : v) a.push_back(to_json(s));
  return a;
}

std::vector<PromptSource> prompt_sources_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw InvalidArgument(fmt::format("config '{}' must be an array", path));
  std::vector<PromptSource> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(prompt_source_from_json(j[i], fmt::format("{}[{}]", path, i)));
  return out;
}

json to_json(const PluginSpec& p) { return {{"name", p.name}, {"options", p.options}}; }

PluginSpec plugin_from_json(const json& j, const std::string& path) {
  PluginSpec p;
  if (j.is_string()) {
    p.name = j.get<std::string>();
    return p;
  }
  Reader r(j, path);
  r.get("name", p.name);
  if (const json* o = r.find("options")) {
    if (!o->is_object()) throw InvalidArgument(fmt::format("config '{}.options' must be an object", path));
    p.options = *o;
  }
  r.finish();
  return p;
}

std::optional<PluginSpec> opt_plugin_from_json(const json* j, const std::string& path) {
  if (!j || j->is_null()) return std::nullopt;
  return plugin_from_json(*j, path);
}

json to_json(const std::vector<MethodSpec>& v) {
  json a = json::array();
  for (const auto& m : v) a.push_back({{"name", m.name}, {"checkpoint", opt_json(m.checkpoint)}});
  return a;
}

std::vector<MethodSpec> methods_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw InvalidArgument(fmt::format("config '{}' must be an array", path));
  std::vector<MethodSpec> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    Reader r(j[i], fmt::format("{}[{}]", path, i));
    MethodSpec m;
    r.get("name", m.name);
    r.get("checkpoint", m.checkpoint);
    r.finish();
    if (m.name.empty()) throw InvalidArgument(fmt::format("config '{}[{}]' needs a name", path, i));
    out.push_back(std::move(m));
  }
  return out;
}

// ---- sections ----

json to_json(const PolicySection& s) {
  const auto& m = s.model;
  return {
      {"model",
       {{"shape", {{"channels", m.shape.channels}, {"height", m.shape.height}, {"width", m.shape.width}}},
        {"num_steps", m.num_steps},
        {"sigma_min", m.sigma_min},
        {"sigma_max", m.sigma_max},
        {"context_dim", m.context_dim},
        {"mean_scale", m.mean_scale},
        {"activation", policy::to_string(m.activation)},
        {"decode_scale", m.decode_scale}}},
      {"world",
       {{"unsafe_region", policy::to_string(s.world.unsafe_region)},
        {"unsafe_gain", s.world.unsafe_gain},
        {"pattern_gain", s.world.pattern_gain},
        {"state_gain", s.world.state_gain},
        {"pattern_seed", s.world.pattern_seed}}},
      {"encoder", {{"unsafe_lexicon", s.encoder.unsafe_lexicon}, {"unsafe_level", s.encoder.unsafe_level}}},
  };
}

void policy_from_json(const json& j, PolicySection& s) {
  Reader r(j, "policy");
  if (const json* mj = r.find("model")) {
    Reader m(*mj, "policy.model");
    if (const json* sh = m.find("shape")) {
      Reader shr(*sh, "policy.model.shape");
      shr.get("channels", s.model.shape.channels);
      shr.get("height", s.model.shape.height);
      shr.get("width", s.model.shape.width);
      shr.finish();
    }
    m.get("num_steps", s.model.num_steps);
    m.get("sigma_min", s.model.sigma_min);
    m.get("sigma_max", s.model.sigma_max);
    m.get("context_dim", s.model.context_dim);
    m.get("mean_scale", s.model.mean_scale);
    m.get_enum("activation", s.model.activation, policy::parse_mean_activation);
    m.get("decode_scale", s.model.decode_scale);
    m.finish();
  }
  if (const json* wj = r.find("world")) {
    Reader w(*wj, "policy.world");
    w.get_enum("unsafe_region", s.world.unsafe_region, policy::parse_quadrant);
    w.get("unsafe_gain", s.world.unsafe_gain);
    w.get("pattern_gain", s.world.pattern_gain);
    w.get("state_gain", s.world.state_gain);
    w.get("pattern_seed", s.world.pattern_seed);
    w.finish();
  }
  if (const json* ej = r.find("encoder")) {
    Reader e(*ej, "policy.encoder");
    e.get("unsafe_lexicon", s.encoder.unsafe_lexicon);
    e.get("unsafe_level", s.encoder.unsafe_level);
    e.finish();
  }
  r.finish();
}

json to_json(const LoraSection& s) {
  return {{"enabled", s.enabled}, {"rank", s.rank}, {"alpha", opt_json(s.alpha)}, {"targets", s.targets}};
}

void lora_from_json(const json& j, LoraSection& s) {
  Reader r(j, "lora");
  r.get("enabled", s.enabled);
  r.get("rank", s.rank);
  r.get("alpha", s.alpha);
  r.get("targets", s.targets);
  r.finish();
}

json vec_json(const std::optional<Eigen::VectorXd>& v) {
  if (!v) return nullptr;
  return std::vector<double>(v->data(), v->data() + v->size());
}

std::optional<Eigen::VectorXd> vec_from_json(Reader& r, const std::string& key) {
  std::optional<std::vector<double>> v;
  r.get(key, v);
  if (!v) return std::nullopt;
  return Eigen::Map<const Eigen::VectorXd>(v->data(), static_cast<Eigen::Index>(v->size()));
}

json to_json(const RewardSection& s) {
  const auto& f = s.weights.face;
  return {{"lambda_align", s.weights.lambda_align},
          {"lambda_nudity", s.weights.lambda_nudity},
          {"align_against", s.weights.align_against == reward::AlignTarget::raw_prompt ? "raw_prompt" : "sanitized_prompt"},
          {"face",
           {{"lambda_landmark", f.lambda_landmark},
            {"lambda_age", f.lambda_age},
            {"lambda_embedding", f.lambda_embedding},
            {"tau", f.tau},
            {"reference_landmarks", vec_json(f.reference_landmarks)},
            {"reference_age", opt_json(f.reference_age)},
            {"reference_embedding", vec_json(f.reference_embedding)}}},
          {"detector", to_json(s.detector)},
          {"aligner", to_json(s.aligner)},
          {"face_analyzer", s.face_analyzer ? to_json(*s.face_analyzer) : json(nullptr)},
          {"class_weights", s.class_weights}};
}

void reward_from_json(const json& j, RewardSection& s) {
  Reader r(j, "reward");
  r.get("lambda_align", s.weights.lambda_align);
  r.get("lambda_nudity", s.weights.lambda_nudity);
  r.get_enum("align_against", s.weights.align_against, [](const std::string& v) {
    if (v == "raw_prompt") return reward::AlignTarget::raw_prompt;
    if (v == "sanitized_prompt") return reward::AlignTarget::sanitized_prompt;
    throw InvalidArgument(fmt::format("unknown align target '{}'", v));
  });
  if (const json* fj = r.find("face")) {
    Reader f(*fj, "reward.face");
    auto& fc = s.weights.face;
    f.get("lambda_landmark", fc.lambda_landmark);
    f.get("lambda_age", fc.lambda_age);
    f.get("lambda_embedding", fc.lambda_embedding);
    f.get("tau", fc.tau);
    fc.reference_landmarks = vec_from_json(f, "reference_landmarks");
    f.get("reference_age", fc.reference_age);
    fc.reference_embedding = vec_from_json(f, "reference_embedding");
    f.finish();
  }
  if (const json* d = r.find("detector")) s.detector = plugin_from_json(*d, "reward.detector");
  if (const json* a = r.find("aligner")) s.aligner = plugin_from_json(*a, "reward.aligner");
  s.face_analyzer = opt_plugin_from_json(r.find("face_analyzer"), "reward.face_analyzer");
  if (const json* cw = r.find("class_weights")) {
    if (!cw->is_null() && !cw->is_string() && !cw->is_object())
      throw InvalidArgument("config 'reward.class_weights' must be null, a path or an object");
    s.class_weights = *cw;
  }
  r.finish();
}

json to_json(const TrainerSection& s) {
  const auto& c = s.config;
  return {{"batch_size", c.batch_size},
          {"samples_per_prompt", c.samples_per_prompt},
          {"inner_epochs", c.inner_epochs},
          {"clip_epsilon", c.clip_epsilon},
          {"learning_rate", c.learning_rate},
          {"advantage_norm", trainer::to_string(c.advantage_norm)},
          {"total_rounds", c.total_rounds},
          {"unsafe_fraction", c.unsafe_fraction},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_epsilon", c.adam_epsilon},
          {"checkpoint_every", s.checkpoint_every},
          {"prompts", to_json(s.prompts)},
          {"init_checkpoint", opt_json(s.init_checkpoint)}};
}

void trainer_from_json(const json& j, TrainerSection& s) {
  Reader r(j, "trainer");
  auto& c = s.config;
  r.get("batch_size", c.batch_size);
  r.get("samples_per_prompt", c.samples_per_prompt);
  r.get("inner_epochs", c.inner_epochs);
  r.get("clip_epsilon", c.clip_epsilon);
  r.get("learning_rate", c.learning_rate);
  r.get_enum("advantage_norm", c.advantage_norm, trainer::parse_advantage_norm);
  r.get("total_rounds", c.total_rounds);
  r.get("unsafe_fraction", c.unsafe_fraction);
  r.get("adam_beta1", c.adam_beta1);
  r.get("adam_beta2", c.adam_beta2);
  r.get("adam_epsilon", c.adam_epsilon);
  r.get("checkpoint_every", s.checkpoint_every);
  if (const json* p = r.find("prompts")) s.prompts = prompt_sources_from_json(*p, "trainer.prompts");
  r.get("init_checkpoint", s.init_checkpoint);
  r.finish();
}

json to_json(const EvalSection& s) {
  return {{"methods", to_json(s.methods)},
          {"datasets", to_json(s.datasets)},
          {"images_per_prompt", s.images_per_prompt},
          {"detection_threshold", s.detection_threshold},
          {"feature_extractor", to_json(s.feature_extractor)},
          {"aesthetic", s.aesthetic ? to_json(*s.aesthetic) : json(nullptr)},
          {"frechet_reference", opt_json(s.frechet_reference)},
          {"frechet_shrinkage", s.frechet_shrinkage}};
}

void eval_from_json(const json& j, EvalSection& s) {
  Reader r(j, "eval");
  if (const json* m = r.find("methods")) s.methods = methods_from_json(*m, "eval.methods");
  if (const json* d = r.find("datasets")) s.datasets = prompt_sources_from_json(*d, "eval.datasets");
  r.get("images_per_prompt", s.images_per_prompt);
  r.get("detection_threshold", s.detection_threshold);
  if (const json* f = r.find("feature_extractor")) s.feature_extractor = plugin_from_json(*f, "eval.feature_extractor");
  s.aesthetic = opt_plugin_from_json(r.find("aesthetic"), "eval.aesthetic");
  r.get("frechet_reference", s.frechet_reference);
  r.get("frechet_shrinkage", s.frechet_shrinkage);
  r.finish();
}

json to_json(const I2ISection& s) {
  return {{"methods", to_json(s.methods)},           {"input_dir", opt_json(s.input_dir)},
          {"outputs_per_input", s.outputs_per_input}, {"strength", s.strength},
          {"prompt", s.prompt},                       {"detection_threshold", s.detection_threshold}};
}

void i2i_from_json(const json& j, I2ISection& s) {
  Reader r(j, "i2i");
  if (const json* m = r.find("methods")) s.methods = methods_from_json(*m, "i2i.methods");
  r.get("input_dir", s.input_dir);
  r.get("outputs_per_input", s.outputs_per_input);
  r.get("strength", s.strength);
  r.get("prompt", s.prompt);
  r.get("detection_threshold", s.detection_threshold);
  r.finish();
}

json to_json(const AttackSection& s) {
  return {{"methods", to_json(s.methods)},
          {"prompts", to_json(s.prompts)},
          {"similarity_threshold", s.search.similarity_threshold},
          {"query_budget", s.search.query_budget},
          {"strategy", attack::to_string(s.search.strategy)},
          {"bandit_step", s.search.bandit_step},
          {"bandit_temperature", s.search.bandit_temperature},
          {"vocabulary", s.vocabulary},
          {"vocabulary_file", opt_json(s.vocabulary_file)},
          {"seeds", s.seeds},
          {"detection_threshold", s.detection_threshold}};
}

void attack_from_json(const json& j, AttackSection& s) {
  Reader r(j, "attack");
  if (const json* m = r.find("methods")) s.methods = methods_from_json(*m, "attack.methods");
  if (const json* p = r.find("prompts")) s.prompts = prompt_sources_from_json(*p, "attack.prompts");
  r.get("similarity_threshold", s.search.similarity_threshold);
  r.get("query_budget", s.search.query_budget);
  r.get_enum("strategy", s.search.strategy, attack::parse_search_strategy);
  r.get("bandit_step", s.search.bandit_step);
  r.get("bandit_temperature", s.search.bandit_temperature);
  r.get("vocabulary", s.vocabulary);
  r.get("vocabulary_file", s.vocabulary_file);
  r.get("seeds", s.seeds);
  r.get("detection_threshold", s.detection_threshold);
  r.finish();
}

void check_methods(const std::vector<MethodSpec>& methods, const std::string& section) {
  std::set<std::string> names;
  for (const auto& m : methods)
    if (!names.insert(m.name).second)
      throw InvalidArgument(fmt::format("{}: method name '{}' is used twice", section, m.name));
}

void check_sources(const std::vector<PromptSource>& sources, const std::string& section) {
  std::set<std::string> names;
  for (const auto& s : sources) {
    if (!names.insert(s.name).second)
      throw InvalidArgument(fmt::format("{}: prompt source name '{}' is used twice", section, s.name));
    if (s.synthetic && s.synthetic->n < 1)
      throw InvalidArgument(fmt::format("{}: synthetic source '{}' needs n >= 1", section, s.name));
  }
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, std::filesystem::path base_dir) {
  RunConfig c;
  c.base_dir = std::move(base_dir);
  Reader r(j, "");
  const json* version = r.find("schema_version");
  if (!version) throw InvalidArgument("config is missing 'schema_version'");
  c.schema_version = Reader::convert<int>(*version, "schema_version");
  if (c.schema_version != kSchemaVersion) {
    throw InvalidArgument(
        fmt::format("config schema_version {} is not supported (expected {})", c.schema_version, kSchemaVersion));
  }
  r.get("seed", c.seed);
  r.get("workers", c.workers);
  if (const json* s = r.find("policy")) policy_from_json(*s, c.policy);
  if (const json* s = r.find("lora")) lora_from_json(*s, c.lora);
  if (const json* s = r.find("reward")) reward_from_json(*s, c.reward);
  if (const json* s = r.find("trainer")) trainer_from_json(*s, c.trainer);
  if (const json* s = r.find("eval")) eval_from_json(*s, c.eval);
  if (const json* s = r.find("i2i")) i2i_from_json(*s, c.i2i);
  if (const json* s = r.find("attack")) attack_from_json(*s, c.attack);
  if (const json* s = r.find("io")) {
    Reader io(*s, "io");
    io.get("out", c.io.out);
    io.finish();
  }
  r.finish();
  return c;
}

json RunConfig::to_json() const {
  return {{"schema_version", schema_version},
          {"seed", seed},
          {"workers", workers},
          {"policy", pipeline::to_json(policy)},
          {"lora", pipeline::to_json(lora)},
          {"reward", pipeline::to_json(reward)},
          {"trainer", pipeline::to_json(trainer)},
          {"eval", pipeline::to_json(eval)},
          {"i2i", pipeline::to_json(i2i)},
          {"attack", pipeline::to_json(attack)},
          {"io", {{"out", io.out.generic_string()}}}};
}

void RunConfig::validate() const {
  if (workers < 1) throw InvalidArgument(fmt::format("workers must be >= 1, got {}", workers));
  policy.model.validate();
  if (policy.encoder.unsafe_level < 0.0 || policy.encoder.unsafe_level > 1.0)
    throw InvalidArgument("policy.encoder.unsafe_level must lie in [0, 1]");
  if (policy.model.context_dim < 2) throw InvalidArgument("policy.model.context_dim must be >= 2");
  if (lora.enabled) {
    const int d = policy.model.shape.size();
    const int k = d + 1 + policy.model.context_dim;
    if (lora.rank < 1 || lora.rank >= std::min(d, k))
      throw InvalidArgument(fmt::format("lora.rank must lie in [1, {}), got {}", std::min(d, k), lora.rank));
    if (lora.targets != std::vector<std::string>{"mean"})
      throw InvalidArgument("lora.targets: the toy policy only has the 'mean' map");
  }
  reward.weights.validate();
  trainer.config.validate();
  if (trainer.checkpoint_every < 1) throw InvalidArgument("trainer.checkpoint_every must be >= 1");
  check_sources(trainer.prompts, "trainer.prompts");
  check_methods(eval.methods, "eval.methods");
  check_sources(eval.datasets, "eval.datasets");
  if (eval.images_per_prompt < 1) throw InvalidArgument("eval.images_per_prompt must be >= 1");
  if (eval.detection_threshold < 0.0) throw InvalidArgument("eval.detection_threshold must be >= 0");
  if (eval.frechet_reference) {
    const bool known = std::any_of(eval.methods.begin(), eval.methods.end(),
                                   [&](const MethodSpec& m) { return m.name == *eval.frechet_reference; });
    if (!known) throw InvalidArgument(fmt::format("eval.frechet_reference '{}' is not a listed method", *eval.frechet_reference));
  }
  if (eval.frechet_shrinkage < 0.0) throw InvalidArgument("eval.frechet_shrinkage must be >= 0");
  check_methods(i2i.methods, "i2i.methods");
  if (i2i.outputs_per_input < 1) throw InvalidArgument("i2i.outputs_per_input must be >= 1");
  if (!(i2i.strength > 0.0 && i2i.strength <= 1.0)) throw InvalidArgument("i2i.strength must lie in (0, 1]");
  check_methods(attack.methods, "attack.methods");
  check_sources(attack.prompts, "attack.prompts");
  if (attack.seeds < 1) throw InvalidArgument("attack.seeds must be >= 1");
  attack::AttackConfig probe = attack.search;
  probe.vocabulary = {"x"};
  probe.validate();
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("workers");
  j["io"].erase("out");
  return sha256_hex(j.dump());
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw InvalidArgument(fmt::format("cannot parse config '{}': {}", path.string(), e.what()));
  }
  auto dir = path.parent_path();
  return RunConfig::from_json(j, dir.empty() ? std::filesystem::path(".") : dir);
}

namespace {

template <typename T>
std::optional<T> env_number(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto parsed = std::stoll(v, &used);
    if (used != std::string_view(v).size() || parsed < 0) throw std::invalid_argument("trailing");
    return static_cast<T>(parsed);
  } catch (const std::exception&) {
    throw InvalidArgument(fmt::format("environment variable {}='{}' is not a non-negative integer", name, v));
  }
}

}  // namespace

Overrides overrides_from_env() {
  Overrides o;
  o.seed = env_number<std::uint64_t>("SAFETUNE_SEED");
  o.workers = env_number<int>("SAFETUNE_WORKERS");
  if (const char* out = std::getenv("SAFETUNE_OUT"); out && *out) o.out = out;
  return o;
}

void apply_overrides(RunConfig& config, const Overrides& env, const Overrides& flags) {
  for (const Overrides* o : {&env, &flags}) {
    if (o->seed) config.seed = *o->seed;
    if (o->workers) config.workers = *o->workers;
    if (o->out) config.io.out = std::filesystem::absolute(*o->out);
  }
}

PromptPool load_prompt_source(const PromptSource& source, const RunConfig& config) {
  if (source.synthetic) {
    PromptPool pool;
    for (auto& p : synthetic_prompts(source.synthetic->n, source.synthetic->kind, source.synthetic->seed))
      pool.add(std::move(p), source.synthetic->kind);
    pool.source = "synthetic:" + source.name;
    return pool;
  }
  return load_prompts(config.resolve(*source.path), source.load);
}

}  // namespace safetune::pipeline
