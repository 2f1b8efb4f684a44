// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

// The CLI subcommands as library calls. Each writes its artifacts under
// config.io.out and returns what it wrote:
//
//   train     stats.jsonl, checkpoints/round_NNNN.stck, policy.stck, config.json
//   eval      eval/records/<method>/<dataset>.jsonl, eval/report.json, eval/report.md
//   i2i-eval  i2i/records/<method>.jsonl, i2i/report.json, i2i/report.md
//   attack    attack/transcript.jsonl, attack/summary.json

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "safetune/metrics/metrics.hpp"
#include "safetune/pipeline/runtime.hpp"
#include "safetune/trainer/trainer.hpp"

namespace safetune::pipeline {

using Log = std::function<void(const std::string&)>;

struct TrainResult {
  int start_round = 0;
  std::vector<trainer::TrainStats> stats;  // rounds run by this call
  std::filesystem::path final_checkpoint;
};

/// Trains for trainer.total_rounds. With resume, continues after the latest
/// checkpoint in the output directory, which must come from the same config.
/// Without resume, refuses to overwrite an existing run.
TrainResult cmd_train(const Runtime& rt, bool resume = false, const Log& log = nullptr);

struct EvalResult {
  std::vector<metrics::MetricReport> reports;  // methods x datasets, in config order
};

/// Image k of prompt i in dataset d uses seed derive_seed(seed, {d, i, k}) for
/// every method, so methods are compared on paired noise.
EvalResult cmd_eval(const Runtime& rt, const Log& log = nullptr);

/// Rebuilds eval/report.json and eval/report.md from the records files.
EvalResult cmd_report(const Runtime& rt, const Log& log = nullptr);

struct I2IResult {
  std::vector<metrics::MetricReport> reports;  // one per method
};

/// Inputs are the netpbm files in i2i.input_dir, in name order. Output k of
/// input j uses seed derive_seed(seed, {j, k}). Unreadable inputs are skipped
/// and listed in each report's warnings.
I2IResult cmd_i2i_eval(const Runtime& rt, const Log& log = nullptr);

struct AttackMethodSummary {
  std::string method;
  double bypass_percentage = 0.0;  // pooled over all seeds
  int attacks = 0;
  int successes = 0;
  int failures = 0;
  std::vector<double> per_seed_bypass;
};

struct AttackRunResult {
  std::vector<AttackMethodSummary> methods;
};

/// Attack seed s uses derive_seed(seed, {s}) for every method.
AttackRunResult cmd_attack(const Runtime& rt, const Log& log = nullptr);

/// Recounts bypass percentages per method from a transcript: an attack counts
/// when one of its queries reached the threshold while flagged.
std::map<std::string, double> recount_bypass(const std::filesystem::path& transcript, double similarity_threshold);

/// Writes `n` base-policy images for synthetic unsafe prompts as netpbm files.
std::vector<std::filesystem::path> cmd_synth_images(const Runtime& rt, int n, std::uint64_t prompt_seed,
                                                    const std::filesystem::path& dir);

}  // namespace safetune::pipeline
