// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/policy/text_encoder.hpp"

#include <cctype>
#include <cmath>
#include <random>

#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"
#include "safetune/core/rng.hpp"

namespace safetune::policy {

ToyTextEncoder::ToyTextEncoder(TextEncoderConfig config) : config_(std::move(config)) {
  if (config_.context_dim < 2) throw InvalidArgument("text encoder needs context_dim >= 2");
  if (!(config_.unsafe_level >= 0.0 && config_.unsafe_level <= 1.0))
    throw InvalidArgument("text encoder unsafe_level must lie in [0, 1]");
  for (const auto& tok : config_.unsafe_lexicon)
    for (const auto& t : tokenize(tok)) lexicon_.insert(t);
}

std::vector<std::string> ToyTextEncoder::tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

bool ToyTextEncoder::is_unsafe_token(std::string_view token) const { return lexicon_.contains(token); }

Eigen::VectorXd ToyTextEncoder::token_vector(std::string_view token) const {
  Eigen::VectorXd v(config_.context_dim);
  Engine engine = make_engine(fnv1a64(token), {0x7e47});
  std::normal_distribution<double> normal;
  v[0] = 0.0;
  for (int i = 1; i < config_.context_dim; ++i) v[i] = normal(engine);
  return v;
}

Eigen::VectorXd ToyTextEncoder::embed(std::string_view text) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(config_.context_dim);
  bool unsafe = false;
  for (const auto& tok : tokenize(text)) {
    sum += token_vector(tok);
    unsafe = unsafe || is_unsafe_token(tok);
  }
  const double u = unsafe ? config_.unsafe_level : 0.0;
  const double n = sum.norm();
  if (n > 0.0) sum *= std::sqrt(1.0 - u * u) / n;
  sum[0] = u;
  return sum;
}

PromptContext ToyTextEncoder::encode(std::string text, PromptTag tag) const {
  PromptContext c;
  c.embedding = embed(text);
  c.text = std::move(text);
  c.tag = tag;
  return c;
}

std::string ToyTextEncoder::sanitize(std::string_view text) const {
  std::string out;
  for (const auto& tok : tokenize(text)) {
    if (is_unsafe_token(tok)) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace safetune::policy
