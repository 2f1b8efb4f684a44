// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/pipeline/commands.hpp"
#include "safetune/pipeline/config.hpp"
#include "safetune/pipeline/prompts.hpp"
#include "safetune/pipeline/runtime.hpp"

namespace st = safetune::pipeline;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Master seed; overrides SAFETUNE_SEED and the file");
  cmd->add_option("--workers", c.workers, "Worker threads; overrides SAFETUNE_WORKERS and the file")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory; overrides SAFETUNE_OUT and the file");
  cmd->add_flag("-q,--quiet", c.quiet, "Suppress progress output");
}

st::Runtime runtime_from(const Common& c) {
  auto config = st::load_run_config(c.config);
  st::Overrides flags;
  flags.seed = c.seed;
  flags.workers = c.workers;
  if (c.out) flags.out = *c.out;
  st::apply_overrides(config, st::overrides_from_env(), flags);
  return st::make_runtime(std::move(config));
}

st::Log logger(const Common& c) {
  if (c.quiet) return nullptr;
  return [](const std::string& msg) { std::cerr << msg << '\n'; };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Safety fine-tuning of denoising policies: train, evaluate, attack."};
  app.require_subcommand(1);

  Common common;
  bool resume = false;
  auto* train = app.add_subcommand("train", "Fine-tune the policy with the safety reward");
  add_common(train, common);
  train->add_flag("--resume", resume, "Continue from the latest checkpoint in the output directory");

  auto* eval = app.add_subcommand("eval", "Generate images per method and dataset and write metric reports");
  add_common(eval, common);

  auto* i2i = app.add_subcommand("i2i-eval", "Image-to-image safety evaluation on an input directory");
  add_common(i2i, common);

  auto* attack = app.add_subcommand("attack", "Adversarial prompt search against each method");
  add_common(attack, common);

  auto* report = app.add_subcommand("report", "Rebuild eval reports from existing records");
  add_common(report, common);

  auto* synth = app.add_subcommand("synth", "Write synthetic prompt lists or input images");
  synth->require_subcommand(1);
  int n = 10;
  std::uint64_t synth_seed = 0;
  std::string kind = "unsafe";
  std::string target;
  auto* synth_prompts = synth->add_subcommand("prompts", "Template prompts, one per line");
  synth_prompts->add_option("-n,--count", n, "Number of prompts")->check(CLI::PositiveNumber);
  synth_prompts->add_option("--kind", kind, "unsafe or benign")->check(CLI::IsMember({"unsafe", "benign"}));
  synth_prompts->add_option("--seed", synth_seed, "Generator seed");
  synth_prompts->add_option("--file", target, "Output file")->required();
  auto* synth_vocab = synth->add_subcommand("vocabulary", "Substitution vocabulary for the attack");
  synth_vocab->add_option("--file", target, "Output file")->required();
  Common images_common;
  auto* synth_images = synth->add_subcommand("images", "Base-policy images for unsafe prompts (netpbm)");
  add_common(synth_images, images_common);
  synth_images->add_option("-n,--count", n, "Number of images")->check(CLI::PositiveNumber);
  synth_images->add_option("--prompt-seed", synth_seed, "Prompt and noise seed");
  synth_images->add_option("--dir", target, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) {
      const auto rt = runtime_from(common);
      const auto r = st::cmd_train(rt, resume, logger(common));
      std::cout << r.final_checkpoint.string() << '\n';
    } else if (eval->parsed()) {
      const auto r = st::cmd_eval(runtime_from(common), logger(common));
      std::cout << safetune::metrics::render_markdown(r.reports);
    } else if (i2i->parsed()) {
      const auto r = st::cmd_i2i_eval(runtime_from(common), logger(common));
      std::cout << safetune::metrics::render_markdown(r.reports);
    } else if (attack->parsed()) {
      const auto r = st::cmd_attack(runtime_from(common), logger(common));
      for (const auto& m : r.methods) std::cout << fmt::format("{}\t{:.1f}\n", m.method, m.bypass_percentage);
    } else if (report->parsed()) {
      const auto r = st::cmd_report(runtime_from(common), logger(common));
      std::cout << safetune::metrics::render_markdown(r.reports);
    } else if (synth_prompts->parsed()) {
      const auto tag = kind == "unsafe" ? safetune::policy::PromptTag::unsafe : safetune::policy::PromptTag::benign;
      st::write_lines(target, st::synthetic_prompts(n, tag, synth_seed));
    } else if (synth_vocab->parsed()) {
      st::write_lines(target, st::synthetic_vocabulary());
    } else if (synth_images->parsed()) {
      for (const auto& p : st::cmd_synth_images(runtime_from(images_common), n, synth_seed, target))
        std::cout << p.string() << '\n';
    }
  } catch (const safetune::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
