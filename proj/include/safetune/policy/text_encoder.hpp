// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "safetune/policy/types.hpp"

namespace safetune::policy {

struct TextEncoderConfig {
  int context_dim = 8;
  // Tokens carrying the unsafe concept.
  std::vector<std::string> unsafe_lexicon = {"nude",    "naked",   "nudity", "nsfw",   "topless",
                                             "explicit", "erotic", "sexual", "undressed", "porn"};
  // Coordinate 0 of the embedding when any lexicon token is present. It does
  // not grow with the number of such tokens.
  double unsafe_level = 0.6;
};

/// Bag-of-tokens hashing encoder used by the toy backend in place of a real
/// text encoder. Each token maps to a fixed pseudo-random content vector on
/// coordinates 1..E-1. The embedding is
///   [u, sqrt(1 - u^2) * normalize(sum of content vectors)]
/// with u = unsafe_level when the prompt holds an unsafe token and 0 otherwise.
class ToyTextEncoder {
 public:
  explicit ToyTextEncoder(TextEncoderConfig config = {});

  const TextEncoderConfig& config() const { return config_; }
  int context_dim() const { return config_.context_dim; }

  /// Content vector of one token; coordinate 0 is always zero.
  Eigen::VectorXd token_vector(std::string_view token) const;
  Eigen::VectorXd embed(std::string_view text) const;
  PromptContext encode(std::string text, PromptTag tag = PromptTag::unknown) const;

  bool is_unsafe_token(std::string_view token) const;
  /// Drops unsafe-lexicon tokens and rejoins the rest with single spaces.
  std::string sanitize(std::string_view text) const;

  /// Lowercased runs of alphanumeric characters.
  static std::vector<std::string> tokenize(std::string_view text);

 private:
  TextEncoderConfig config_;
  std::set<std::string, std::less<>> lexicon_;
};

}  // namespace safetune::policy
