// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/policy/types.hpp"

#include <cstring>
#include <numeric>
#include <span>

#include <fmt/format.h>

#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"

namespace safetune::policy {

std::string_view to_string(PromptTag tag) {
  switch (tag) {
    case PromptTag::benign: return "benign";
    case PromptTag::unsafe: return "unsafe";
    case PromptTag::unknown: return "unknown";
  }
  return "unknown";
}

PromptTag parse_prompt_tag(std::string_view s) {
  if (s == "benign") return PromptTag::benign;
  if (s == "unsafe") return PromptTag::unsafe;
  if (s == "unknown" || s.empty()) return PromptTag::unknown;
  throw InvalidArgument(fmt::format("unknown prompt tag '{}'", s));
}

double Trajectory::total_log_prob() const {
  return std::accumulate(step_log_probs.begin(), step_log_probs.end(), 0.0);
}

std::string Image::bytes() const {
  return pack_float32(std::span<const double>(pixels.data(), static_cast<std::size_t>(pixels.size())));
}

namespace {

template <typename T>
void put(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_vector(std::string& out, const Eigen::VectorXd& v) {
  put<std::int64_t>(out, v.size());
  out.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
}

}  // namespace

std::string serialize(const Trajectory& trajectory) {
  std::string out;
  put<std::uint64_t>(out, trajectory.seed);
  put<std::int64_t>(out, static_cast<std::int64_t>(trajectory.context.text.size()));
  out += trajectory.context.text;
  put<std::int32_t>(out, static_cast<std::int32_t>(trajectory.context.tag));
  put_vector(out, trajectory.context.embedding);
  put<std::int64_t>(out, static_cast<std::int64_t>(trajectory.states.size()));
  for (const auto& s : trajectory.states) {
    put<std::int32_t>(out, s.timestep);
    put_vector(out, s.values);
  }
  put<std::int64_t>(out, static_cast<std::int64_t>(trajectory.step_log_probs.size()));
  for (double lp : trajectory.step_log_probs) put<double>(out, lp);
  return out;
}

}  // namespace safetune::policy
