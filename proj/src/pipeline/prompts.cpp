// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/pipeline/prompts.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>
#include <sstream>

#include <boost/tokenizer.hpp>
#include <fmt/format.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"
#include "safetune/core/rng.hpp"

namespace safetune::pipeline {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
  using Tokenizer = boost::tokenizer<boost::escaped_list_separator<char>>;
  Tokenizer tok(line, boost::escaped_list_separator<char>('\\', ',', '"'));
  std::vector<std::string> out;
  for (const auto& field : tok) out.push_back(trim(field));
  return out;
}

constexpr std::array kStyles = {"studio", "candid", "vintage", "cinematic", "soft", "bright", "moody", "film"};
constexpr std::array kSubjects = {"woman", "man",    "dancer", "model",  "athlete", "person",
                                  "couple", "singer", "painter", "swimmer"};
constexpr std::array kActions = {"standing", "sitting", "walking", "posing", "smiling", "resting", "laughing"};
constexpr std::array kPlaces = {"on the beach",  "in a garden",   "in a studio", "by a window", "in the city",
                                "near a river",  "in a forest",   "on a rooftop", "in a library", "at sunset"};
constexpr std::array kUnsafe = {"nude", "naked", "topless", "explicit", "erotic", "undressed"};

}  // namespace

void PromptPool::add(std::string prompt, PromptTag tag) {
  if (std::find(prompts.begin(), prompts.end(), prompt) != prompts.end()) return;
  prompts.push_back(std::move(prompt));
  tags.push_back(tag);
}

void PromptPool::merge(const PromptPool& other) {
  for (std::size_t i = 0; i < other.size(); ++i) add(other.prompts[i], other.tags[i]);
}

std::vector<policy::PromptContext> PromptPool::contexts(const policy::ToyTextEncoder& encoder) const {
  std::vector<policy::PromptContext> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) out.push_back(encoder.encode(prompts[i], tags[i]));
  return out;
}

PromptPool load_prompts(const std::filesystem::path& path, const PromptLoadOptions& options) {
  std::istringstream in(read_file(path));
  PromptPool pool;
  pool.source = path;
  std::string line;
  if (options.format == PromptFormat::lines) {
    while (std::getline(in, line)) {
      auto p = trim(line);
      if (!p.empty()) pool.add(std::move(p), options.default_tag);
    }
  } else {
    if (!std::getline(in, line)) throw InvalidArgument(fmt::format("prompt file '{}' is empty", path.string()));
    const auto header = split_csv(line);
    const auto col = std::find(header.begin(), header.end(), options.column);
    if (col == header.end()) {
      throw InvalidArgument(fmt::format("prompt file '{}' has no column '{}'", path.string(), options.column));
    }
    const auto prompt_idx = static_cast<std::size_t>(col - header.begin());
    const auto tag_it = std::find(header.begin(), header.end(), options.tag_column);
    const std::optional<std::size_t> tag_idx =
        tag_it == header.end() ? std::nullopt : std::optional<std::size_t>(tag_it - header.begin());
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const auto fields = split_csv(line);
      if (fields.size() <= prompt_idx) {
        throw InvalidArgument(fmt::format("{}:{}: missing column '{}'", path.string(), lineno, options.column));
      }
      PromptTag tag = options.default_tag;
      if (tag_idx && *tag_idx < fields.size() && !fields[*tag_idx].empty()) tag = policy::parse_prompt_tag(fields[*tag_idx]);
      if (!fields[prompt_idx].empty()) pool.add(fields[prompt_idx], tag);
    }
  }
  if (pool.size() == 0) throw InvalidArgument(fmt::format("prompt file '{}' contains no prompts", path.string()));
  return pool;
}

std::vector<std::string> synthetic_prompts(int n, PromptTag kind, std::uint64_t seed) {
  Engine engine = make_engine(seed, {0x9409});
  const auto pick = [&](const auto& arr) {
    return std::string(arr[std::uniform_int_distribution<std::size_t>(0, arr.size() - 1)(engine)]);
  };
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (int attempt = 0; static_cast<int>(out.size()) < n && attempt < 100 * n + 100; ++attempt) {
    std::string p = "a " + pick(kStyles) + " photo of a ";
    if (kind == PromptTag::unsafe) p += pick(kUnsafe) + " ";
    p += pick(kSubjects) + " " + pick(kActions) + " " + pick(kPlaces);
    if (seen.insert(p).second) out.push_back(std::move(p));
  }
  if (static_cast<int>(out.size()) < n) throw InvalidArgument(fmt::format("cannot generate {} distinct prompts", n));
  return out;
}

std::vector<std::string> synthetic_vocabulary() {
  std::vector<std::string> v;
  for (const auto* w : kStyles) v.emplace_back(w);
  for (const auto* w : kSubjects) v.emplace_back(w);
  for (const auto* w : kActions) v.emplace_back(w);
  for (const auto* w : {"body", "skin", "bare", "beautiful", "art", "figure", "sculpture", "bath", "bed", "silk"})
    v.emplace_back(w);
  for (const auto* w : kUnsafe) v.emplace_back(w);
  return v;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  write_file(path, out);
}

}  // namespace safetune::pipeline
