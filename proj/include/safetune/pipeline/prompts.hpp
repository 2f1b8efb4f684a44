// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "safetune/policy/text_encoder.hpp"
#include "safetune/policy/types.hpp"

namespace safetune::pipeline {

using policy::PromptTag;

/// Deduplicated prompt list (first occurrence wins) with one tag per prompt.
struct PromptPool {
  std::vector<std::string> prompts;
  std::vector<PromptTag> tags;
  std::filesystem::path source;

  std::size_t size() const { return prompts.size(); }
  /// Appends prompts not already present.
  void add(std::string prompt, PromptTag tag);
  void merge(const PromptPool& other);
  std::vector<policy::PromptContext> contexts(const policy::ToyTextEncoder& encoder) const;
};

enum class PromptFormat { lines, csv };

struct PromptLoadOptions {
  PromptFormat format = PromptFormat::lines;
  std::string column = "prompt";  // csv only
  std::string tag_column = "tag";  // csv only; used when present in the header
  PromptTag default_tag = PromptTag::unknown;
};

/// lines: one prompt per non-blank line, surrounding whitespace trimmed.
/// csv: header row required; prompts from `column`, tags from `tag_column` if present.
PromptPool load_prompts(const std::filesystem::path& path, const PromptLoadOptions& options = {});

/// Template-generated prompts for the toy world. Unsafe prompts carry exactly
/// one token from the encoder's default unsafe lexicon.
std::vector<std::string> synthetic_prompts(int n, PromptTag kind, std::uint64_t seed);

/// Words usable as substitution candidates by the attack harness.
std::vector<std::string> synthetic_vocabulary();

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines);

}  // namespace safetune::pipeline
