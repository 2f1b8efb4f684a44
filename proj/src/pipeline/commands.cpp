// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/pipeline/commands.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "safetune/attack/attack.hpp"
#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"
#include "safetune/core/parallel.hpp"
#include "safetune/core/rng.hpp"
#include "safetune/pipeline/checkpoint.hpp"
#include "safetune/pipeline/image_io.hpp"

namespace safetune::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kLoraInitTag = 0x4c6f5241;

void say(const Log& log, const std::string& msg) {
  if (log) log(msg);
}

// Method and dataset names become path components.
void check_name(const std::string& name, const char* what) {
  static const std::regex ok("[A-Za-z0-9_.-]+");
  if (!std::regex_match(name, ok) || name == "." || name == "..")
    throw InvalidArgument(fmt::format("{} name '{}' must match [A-Za-z0-9_.-]+", what, name));
}

// parallel_for with exceptions carried back to the caller; the lowest failing index wins.
template <typename Fn>
void parallel_try(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  parallel_for(n, workers, [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

PromptPool merged_pool(const std::vector<PromptSource>& sources, const RunConfig& config) {
  PromptPool pool;
  for (const auto& s : sources) pool.merge(load_prompt_source(s, config));
  return pool;
}

std::string checkpoint_name(int next_round) { return fmt::format("round_{:04d}.stck", next_round); }

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  static const std::regex pattern("round_(\\d{4,})\\.stck");
  std::optional<fs::path> best;
  int best_round = -1;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (!std::regex_match(name, m, pattern)) continue;
    const int round = std::stoi(m[1].str());
    if (round > best_round) {
      best_round = round;
      best = entry.path();
    }
  }
  return best;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) lines.push_back(line);
  return lines;
}

json report_json(const Runtime& rt, const std::vector<metrics::MetricReport>& reports) {
  json list = json::array();
  for (const auto& r : reports) {
    json j = r.to_json();
    j.erase("records");  // the records live in their own files
    list.push_back(std::move(j));
  }
  return {{"config_hash", rt.config_hash}, {"reports", std::move(list)}};
}

void write_reports(const Runtime& rt, const fs::path& dir, const std::vector<metrics::MetricReport>& reports) {
  write_file(dir / "report.json", report_json(rt, reports).dump(2) + "\n");
  write_file(dir / "report.md", fmt::format("Config hash: `{}`\n\n{}", rt.config_hash, metrics::render_markdown(reports)));
}

metrics::MetricConfig metric_config(const Runtime& rt, const std::string& dataset, const std::string& method,
                                    double threshold) {
  return {dataset, method, rt.class_weights.unsafe_classes(), threshold, rt.config_hash};
}

struct ScoredImage {
  metrics::ImageEvalRecord record;
  Eigen::VectorXd features;
};

// Detector, aligner and aesthetic outputs for one generated image.
ScoredImage score_image(const Runtime& rt, const reward::PluginPool<reward::AestheticPlugin>* aesthetics,
                        const reward::PluginPool<reward::FeatureExtractorPlugin>* features, const policy::Image& image,
                        const std::string& prompt, bool with_clip, std::string image_ref) {
  ScoredImage s;
  s.record.prompt = prompt;
  s.record.detections = rt.engine->detect(image);
  if (with_clip) s.record.clip_score = rt.aligners->acquire()->align(image, prompt);
  if (aesthetics) s.record.aesthetic = aesthetics->acquire()->score(image);
  s.record.image_ref = std::move(image_ref) + "#" + reward::image_id(image);
  if (features) s.features = features->acquire()->features(image);
  return s;
}

Eigen::MatrixXd stack_rows(const std::vector<ScoredImage>& items) {
  if (items.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(items.size()), items.front().features.size());
  for (std::size_t i = 0; i < items.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = items[i].features.transpose();
  return m;
}

}  // namespace

TrainResult cmd_train(const Runtime& rt, bool resume, const Log& log) {
  const RunConfig& cfg = rt.config;
  const fs::path out = rt.out_dir();
  const fs::path ckpt_dir = out / "checkpoints";
  const fs::path stats_path = out / "stats.jsonl";

  const PromptPool pool = merged_pool(cfg.trainer.prompts, cfg);
  const auto contexts = pool.contexts(rt.context.encoder);

  trainer::TrainerConfig tc = cfg.trainer.config;
  tc.seed = cfg.seed;
  tc.workers = cfg.workers;

  TrainResult result;
  std::optional<policy::DenoisingPolicy> policy;
  std::optional<OptimizerState> restored;
  std::string kept_stats;

  if (resume) {
    const auto latest = latest_checkpoint(ckpt_dir);
    if (!latest) throw InvalidArgument(fmt::format("--resume: no checkpoint under '{}'", ckpt_dir.string()));
    TrainingState state = checkpoint_load(*latest);
    if (state.config_hash != rt.config_hash)
      throw InvalidArgument(fmt::format("--resume: '{}' was written by config {}, current config is {}",
                                        latest->string(), state.config_hash, rt.config_hash));
    result.start_round = state.next_round;
    policy = std::move(state.policy);
    restored = std::move(state.optimizer);
    if (fs::exists(stats_path)) {
      for (const auto& line : read_lines(stats_path))
        if (trainer::TrainStats::from_json(json::parse(line)).round < result.start_round) kept_stats += line + "\n";
    }
    say(log, fmt::format("resuming from {} at round {}", latest->string(), result.start_round));
  } else {
    if (fs::exists(stats_path) || fs::exists(ckpt_dir))
      throw InvalidArgument(fmt::format("'{}' already holds a training run; pass --resume or choose another --out",
                                        out.string()));
    if (cfg.trainer.init_checkpoint) {
      policy = rt.method_policy({"init", cfg.trainer.init_checkpoint});
    } else {
      policy = rt.base_policy();
    }
    if (cfg.lora.enabled && !policy->lora_enabled())
      policy->enable_lora(cfg.lora.rank, cfg.lora.alpha, derive_seed(cfg.seed, {kLoraInitTag}));
  }

  trainer::AdamOptimizer optimizer(policy->trainable_size(), tc.adam());
  if (restored) optimizer.restore(restored->first_moment, restored->second_moment, restored->steps);

  fs::create_directories(ckpt_dir);
  write_file(out / "config.json", json{{"config_hash", rt.config_hash}, {"config", cfg.to_json()}}.dump(2) + "\n");
  write_file(stats_path, kept_stats);
  std::ofstream stats_out(stats_path, std::ios::app);
  if (!stats_out) throw Error(fmt::format("cannot append to '{}'", stats_path.string()));

  for (int r = result.start_round; r < tc.total_rounds; ++r) {
    const auto stats = trainer::train_round(*policy, optimizer, contexts, *rt.engine, tc, r);
    stats_out << stats.to_json().dump() << "\n" << std::flush;
    result.stats.push_back(stats);
    say(log, fmt::format("round {:3d}  reward {:.4f}  nudity {:.4f}  align {:.4f}  clipped {:.3f}", r,
                         stats.mean_reward, stats.mean_nudity, stats.mean_alignment, stats.clipped_fraction));
    const int done = r + 1;
    if (done % cfg.trainer.checkpoint_every == 0 || done == tc.total_rounds)
      checkpoint_save(ckpt_dir / checkpoint_name(done), *policy, done, &optimizer, rt.config_hash);
  }
  result.final_checkpoint = out / "policy.stck";
  checkpoint_save(result.final_checkpoint, *policy, tc.total_rounds, &optimizer, rt.config_hash);
  return result;
}

EvalResult cmd_eval(const Runtime& rt, const Log& log) {
  const RunConfig& cfg = rt.config;
  const auto& ev = cfg.eval;
  if (ev.methods.empty()) throw InvalidArgument("eval.methods is empty");
  if (ev.datasets.empty()) throw InvalidArgument("eval.datasets is empty");
  for (const auto& m : ev.methods) check_name(m.name, "method");
  for (const auto& d : ev.datasets) check_name(d.name, "dataset");

  // Load everything up front so missing files fail before any generation.
  std::vector<policy::DenoisingPolicy> policies;
  for (const auto& m : ev.methods) policies.push_back(rt.method_policy(m));
  std::vector<PromptPool> pools;
  for (const auto& d : ev.datasets) pools.push_back(load_prompt_source(d, cfg));
  const auto aesthetics = ev.aesthetic ? rt.registry.aesthetic(*ev.aesthetic, rt.context) : nullptr;
  const auto features =
      ev.frechet_reference ? rt.registry.feature_extractor(ev.feature_extractor, rt.context) : nullptr;

  const fs::path dir = rt.out_dir() / "eval";
  std::map<std::pair<std::string, std::string>, std::vector<ScoredImage>> scored;
  for (std::size_t mi = 0; mi < ev.methods.size(); ++mi) {
    const auto& method = ev.methods[mi];
    for (std::size_t di = 0; di < ev.datasets.size(); ++di) {
      const auto& dataset = ev.datasets[di];
      const auto contexts = pools[di].contexts(rt.context.encoder);
      const std::size_t per = static_cast<std::size_t>(ev.images_per_prompt);
      std::vector<ScoredImage> items(contexts.size() * per);
      parallel_try(items.size(), cfg.workers, [&](std::size_t n) {
        const std::size_t i = n / per;
        const std::size_t k = n % per;
        const auto traj = policy::sample_trajectory(policies[mi], contexts[i], derive_seed(cfg.seed, {di, i, k}));
        const auto image = policy::decode(traj.final_state(), policies[mi].config());
        items[n] = score_image(rt, aesthetics.get(), features.get(), image, contexts[i].text, true,
                               fmt::format("{}/{:06d}-{}", dataset.name, i, k));
      });
      say(log, fmt::format("eval {} / {}: {} images", method.name, dataset.name, items.size()));
      scored[{method.name, dataset.name}] = std::move(items);
    }
  }

  EvalResult result;
  for (const auto& method : ev.methods) {
    for (const auto& dataset : ev.datasets) {
      const auto& items = scored.at({method.name, dataset.name});
      std::optional<double> frechet;
      if (ev.frechet_reference)
        frechet = metrics::frechet_distance(stack_rows(scored.at({*ev.frechet_reference, dataset.name})),
                                            stack_rows(items), ev.frechet_shrinkage);
      std::vector<metrics::ImageEvalRecord> records;
      for (const auto& s : items) records.push_back(s.record);
      auto report = metrics::build_report(std::move(records),
                                          metric_config(rt, dataset.name, method.name, ev.detection_threshold), frechet);
      metrics::write_records(dir / "records" / method.name / (dataset.name + ".jsonl"), report.records);
      result.reports.push_back(std::move(report));
    }
  }
  write_reports(rt, dir, result.reports);
  return result;
}

EvalResult cmd_report(const Runtime& rt, const Log& log) {
  const RunConfig& cfg = rt.config;
  const fs::path dir = rt.out_dir() / "eval";

  // Frechet needs the images, so it is carried over from the previous report.
  std::map<std::pair<std::string, std::string>, double> frechet;
  if (fs::exists(dir / "report.json")) {
    const json old = json::parse(read_file(dir / "report.json"));
    for (const auto& r : old.at("reports"))
      if (r.contains("frechet") && !r.at("frechet").is_null())
        frechet[{r.at("method").get<std::string>(), r.at("dataset").get<std::string>()}] = r.at("frechet").get<double>();
  }

  EvalResult result;
  for (const auto& method : cfg.eval.methods) {
    for (const auto& dataset : cfg.eval.datasets) {
      const fs::path path = dir / "records" / method.name / (dataset.name + ".jsonl");
      if (!fs::exists(path)) throw InvalidArgument(fmt::format("no records at '{}'; run eval first", path.string()));
      std::optional<double> f;
      if (const auto it = frechet.find({method.name, dataset.name}); it != frechet.end()) f = it->second;
      result.reports.push_back(metrics::build_report(
          metrics::read_records(path), metric_config(rt, dataset.name, method.name, cfg.eval.detection_threshold), f));
    }
  }
  write_reports(rt, dir, result.reports);
  say(log, fmt::format("rebuilt {} reports", result.reports.size()));
  return result;
}

I2IResult cmd_i2i_eval(const Runtime& rt, const Log& log) {
  const RunConfig& cfg = rt.config;
  const auto& i2i = cfg.i2i;
  if (i2i.methods.empty()) throw InvalidArgument("i2i.methods is empty");
  if (!i2i.input_dir) throw InvalidArgument("i2i.input_dir is not set");
  for (const auto& m : i2i.methods) check_name(m.name, "method");
  const fs::path input_dir = rt.resolve(*i2i.input_dir);
  if (!fs::is_directory(input_dir))
    throw InvalidArgument(fmt::format("i2i input directory '{}' does not exist", input_dir.string()));

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(input_dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw InvalidArgument(fmt::format("i2i input directory '{}' is empty", input_dir.string()));

  struct Input {
    std::size_t index;
    std::string name;
    policy::Image image;
  };
  std::vector<Input> inputs;
  std::vector<std::string> warnings;
  for (std::size_t j = 0; j < files.size(); ++j) {
    const std::string name = files[j].filename().string();
    try {
      auto image = read_pnm(files[j]);
      if (!(image.shape == rt.context.model.shape))
        throw FormatError(fmt::format("image is {}x{}x{}, the policy expects {}x{}x{}", image.shape.channels,
                                      image.shape.height, image.shape.width, rt.context.model.shape.channels,
                                      rt.context.model.shape.height, rt.context.model.shape.width));
      inputs.push_back({j, name, std::move(image)});
    } catch (const Error& e) {
      warnings.push_back(fmt::format("skipped '{}': {}", name, e.what()));
      say(log, "warning: " + warnings.back());
    }
  }
  if (inputs.empty()) throw InvalidArgument(fmt::format("no readable images in '{}'", input_dir.string()));

  const auto context = rt.context.encoder.encode(i2i.prompt);
  const bool with_clip = !i2i.prompt.empty();
  const std::size_t per = static_cast<std::size_t>(i2i.outputs_per_input);
  const fs::path dir = rt.out_dir() / "i2i";

  I2IResult result;
  for (const auto& method : i2i.methods) {
    const auto policy = rt.method_policy(method);
    std::vector<ScoredImage> items(inputs.size() * per);
    parallel_try(items.size(), cfg.workers, [&](std::size_t n) {
      const auto& in = inputs[n / per];
      const std::size_t k = n % per;
      const auto traj =
          policy::img2img_trajectory(policy, context, in.image, i2i.strength, derive_seed(cfg.seed, {in.index, k}));
      items[n] = score_image(rt, nullptr, nullptr, policy::decode(traj.final_state(), policy.config()), i2i.prompt,
                             with_clip, fmt::format("{}/{}", in.name, k));
    });
    std::vector<metrics::ImageEvalRecord> records;
    for (auto& s : items) records.push_back(std::move(s.record));
    auto report =
        metrics::build_report(std::move(records), metric_config(rt, "i2i", method.name, i2i.detection_threshold));
    report.warnings.insert(report.warnings.end(), warnings.begin(), warnings.end());
    metrics::write_records(dir / "records" / (method.name + ".jsonl"), report.records);
    say(log, fmt::format("i2i {}: {} outputs, mean nudity score {:.4f}", method.name, report.n_images,
                         report.mean_nudity_score));
    result.reports.push_back(std::move(report));
  }
  write_reports(rt, dir, result.reports);
  return result;
}

AttackRunResult cmd_attack(const Runtime& rt, const Log& log) {
  const RunConfig& cfg = rt.config;
  const auto& at = cfg.attack;
  if (at.methods.empty()) throw InvalidArgument("attack.methods is empty");
  for (const auto& m : at.methods) check_name(m.name, "method");

  const PromptPool pool = merged_pool(at.prompts, cfg);
  attack::AttackConfig search = at.search;
  search.vocabulary = at.vocabulary;
  if (at.vocabulary_file)
    for (auto& line : read_lines(cfg.resolve(*at.vocabulary_file))) search.vocabulary.push_back(std::move(line));
  if (search.vocabulary.empty()) search.vocabulary = synthetic_vocabulary();

  std::vector<std::shared_ptr<const policy::DenoisingPolicy>> policies;
  for (const auto& m : at.methods) policies.push_back(std::make_shared<const policy::DenoisingPolicy>(rt.method_policy(m)));

  const attack::AlignerSimilarity scorer(rt.aligners);
  const attack::DetectorFlagger flagger(rt.detectors, rt.class_weights, at.detection_threshold);

  std::string transcript;
  json methods = json::array();
  AttackRunResult result;
  for (std::size_t mi = 0; mi < at.methods.size(); ++mi) {
    const attack::PolicyTargetModel target(policies[mi], rt.context.encoder);
    AttackMethodSummary summary{at.methods[mi].name};
    json results = json::array();
    for (int s = 0; s < at.seeds; ++s) {
      search.seed = derive_seed(cfg.seed, {static_cast<std::uint64_t>(s)});
      const auto report = attack::evaluate_defense(target, pool.prompts, scorer, flagger, search, cfg.workers);
      summary.attacks += report.attacks;
      summary.successes += report.successes;
      summary.failures += report.failures;
      summary.per_seed_bypass.push_back(report.bypass_percentage);
      for (std::size_t a = 0; a < report.results.size(); ++a) {
        const auto& res = report.results[a];
        for (const auto& q : res.transcript) {
          json line = q.to_json();
          line["method"] = summary.method;
          line["seed_index"] = s;
          line["attack"] = a;
          transcript += line.dump() + "\n";
        }
        json rj = res.to_json();
        rj.erase("generated_image_refs");  // listed per query in the transcript
        rj["seed_index"] = s;
        rj["attack"] = a;
        results.push_back(std::move(rj));
      }
    }
    summary.bypass_percentage = summary.attacks ? 100.0 * summary.successes / summary.attacks : 0.0;
    say(log, fmt::format("attack {}: bypass {:.1f}% ({}/{}, {} failed)", summary.method, summary.bypass_percentage,
                         summary.successes, summary.attacks, summary.failures));
    methods.push_back({{"method", summary.method},
                       {"bypass_percentage", summary.bypass_percentage},
                       {"attacks", summary.attacks},
                       {"successes", summary.successes},
                       {"failures", summary.failures},
                       {"per_seed_bypass", summary.per_seed_bypass},
                       {"results", std::move(results)}});
    result.methods.push_back(std::move(summary));
  }

  const fs::path dir = rt.out_dir() / "attack";
  write_file(dir / "transcript.jsonl", transcript);
  const json summary_json = {{"config_hash", rt.config_hash},
                             {"strategy", attack::to_string(search.strategy)},
                             {"similarity_threshold", search.similarity_threshold},
                             {"query_budget", search.query_budget},
                             {"prompts", pool.size()},
                             {"seeds", at.seeds},
                             {"methods", std::move(methods)}};
  write_file(dir / "summary.json", summary_json.dump(2) + "\n");
  return result;
}

std::map<std::string, double> recount_bypass(const fs::path& transcript, double similarity_threshold) {
  // (method, seed, attack) -> succeeded
  std::map<std::tuple<std::string, int, int>, bool> attacks;
  for (const auto& line : read_lines(transcript)) {
    const json q = json::parse(line);
    const auto key = std::make_tuple(q.at("method").get<std::string>(), q.at("seed_index").get<int>(),
                                     q.at("attack").get<int>());
    bool& hit = attacks[key];
    hit = hit || (q.at("flagged").get<bool>() && q.at("similarity").get<double>() >= similarity_threshold);
  }
  std::map<std::string, std::pair<int, int>> counts;
  for (const auto& [key, hit] : attacks) {
    auto& [hits, total] = counts[std::get<0>(key)];
    hits += hit ? 1 : 0;
    ++total;
  }
  std::map<std::string, double> out;
  for (const auto& [method, c] : counts) out[method] = 100.0 * c.first / c.second;
  return out;
}

std::vector<fs::path> cmd_synth_images(const Runtime& rt, int n, std::uint64_t prompt_seed, const fs::path& dir) {
  if (n < 1) throw InvalidArgument("synth: image count must be >= 1");
  const auto policy = rt.base_policy();
  const auto prompts = synthetic_prompts(n, PromptTag::unsafe, prompt_seed);
  std::vector<fs::path> paths;
  for (int i = 0; i < n; ++i) {
    const auto traj = policy::sample_trajectory(policy, rt.context.encoder.encode(prompts[static_cast<std::size_t>(i)]),
                                                derive_seed(prompt_seed, {static_cast<std::uint64_t>(i)}));
    paths.push_back(dir / fmt::format("input_{:03d}.pgm", i));
    write_pnm(paths.back(), policy::decode(traj.final_state(), policy.config()));
  }
  return paths;
}

}  // namespace safetune::pipeline
