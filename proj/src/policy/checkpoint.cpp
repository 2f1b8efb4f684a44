// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/policy/checkpoint.hpp"

#include <fmt/format.h>

#include "safetune/core/error.hpp"

namespace safetune::policy {

namespace {

std::vector<double> flat(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

Eigen::MatrixXd matrix_from(const TensorBlock& b, Eigen::Index rows, Eigen::Index cols) {
  const bool as_matrix = b.shape.size() == 2 && b.shape[0] == rows && b.shape[1] == cols;
  const bool as_vector = cols == 1 && b.shape.size() == 1 && b.shape[0] == rows;
  if (!as_matrix && !as_vector) {
    throw FormatError(fmt::format("checkpoint block '{}' has shape inconsistent with the manifest", b.name));
  }
  return Eigen::Map<const Eigen::MatrixXd>(b.values.data(), rows, cols);
}

}  // namespace

nlohmann::json policy_manifest(const DenoisingPolicy& policy) {
  const auto& c = policy.config();
  nlohmann::json m;
  m["kind"] = "policy";
  m["format_version"] = kPolicyFormatVersion;
  m["latent_shape"] = {c.shape.channels, c.shape.height, c.shape.width};
  m["num_steps"] = c.num_steps;
  m["sigma_schedule"] = {{"kind", "linear"}, {"min", c.sigma_min}, {"max", c.sigma_max}};
  m["context_dim"] = c.context_dim;
  m["mean_scale"] = c.mean_scale;
  m["activation"] = to_string(c.activation);
  m["decode_scale"] = c.decode_scale;
  if (const auto& l = policy.lora()) {
    m["lora"] = {{"rank", l->rank()}, {"alpha", l->alpha()}, {"base_sha256", lora::content_hash(l->base())}};
  } else {
    m["lora"] = nullptr;
  }
  return m;
}

std::vector<TensorBlock> policy_blocks(const DenoisingPolicy& policy) {
  const auto& w = policy.base_weight();
  std::vector<TensorBlock> blocks;
  blocks.push_back({"policy.weight", {w.rows(), w.cols()}, flat(w)});
  blocks.push_back({"policy.bias", {policy.bias().size()}, flat(policy.bias())});
  if (const auto& l = policy.lora()) {
    blocks.push_back({"lora.B", {l->up().rows(), l->up().cols()}, flat(l->up())});
    blocks.push_back({"lora.A", {l->down().rows(), l->down().cols()}, flat(l->down())});
  }
  return blocks;
}

DenoisingPolicy policy_from_container(const Container& container) {
  const auto& m = container.manifest;
  if (m.value("kind", "") != "policy") throw FormatError("container does not hold a policy checkpoint");
  const int version = m.value("format_version", -1);
  if (version != kPolicyFormatVersion) {
    throw FormatError(fmt::format("policy checkpoint format version {} is not supported by this build (expected {}); "
                                  "no migration is available",
                                  version, kPolicyFormatVersion));
  }
  PolicyConfig c;
  const auto shape = m.at("latent_shape").get<std::vector<int>>();
  if (shape.size() != 3) throw FormatError("latent_shape must have three entries");
  c.shape = {shape[0], shape[1], shape[2]};
  c.num_steps = m.at("num_steps").get<int>();
  const auto& sched = m.at("sigma_schedule");
  if (sched.at("kind").get<std::string>() != "linear") throw FormatError("unsupported sigma schedule kind");
  c.sigma_min = sched.at("min").get<double>();
  c.sigma_max = sched.at("max").get<double>();
  c.context_dim = m.at("context_dim").get<int>();
  c.mean_scale = m.at("mean_scale").get<double>();
  c.activation = parse_mean_activation(m.at("activation").get<std::string>());
  c.decode_scale = m.at("decode_scale").get<double>();

  const int d = c.shape.size();
  const int k = d + 1 + c.context_dim;
  Eigen::MatrixXd w = matrix_from(container.block("policy.weight"), d, k);
  Eigen::VectorXd b = matrix_from(container.block("policy.bias"), d, 1);
  DenoisingPolicy policy(c, w, std::move(b));
  if (!m.at("lora").is_null()) {
    const auto& l = m.at("lora");
    if (lora::content_hash(w) != l.at("base_sha256").get<std::string>()) {
      throw FormatError("lora base hash does not match the stored policy weight");
    }
    const int r = l.at("rank").get<int>();
    policy.set_lora(lora::LoraLayer(w, matrix_from(container.block("lora.B"), d, r),
                                    matrix_from(container.block("lora.A"), r, k), l.at("alpha").get<double>()));
  }
  return policy;
}

void save_policy(const std::filesystem::path& path, const DenoisingPolicy& policy,
                 const nlohmann::json& extra_manifest, const std::vector<TensorBlock>& extra_blocks) {
  nlohmann::json m = policy_manifest(policy);
  for (const auto& [key, value] : extra_manifest.items()) m[key] = value;
  auto blocks = policy_blocks(policy);
  blocks.insert(blocks.end(), extra_blocks.begin(), extra_blocks.end());
  write_container(path, std::move(m), blocks);
}

DenoisingPolicy load_policy(const std::filesystem::path& path) { return policy_from_container(read_container(path)); }

}  // namespace safetune::policy
