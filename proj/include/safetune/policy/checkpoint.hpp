// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "safetune/core/container.hpp"
#include "safetune/policy/denoising_policy.hpp"

namespace safetune::policy {

inline constexpr int kPolicyFormatVersion = 1;

/// Manifest fields: kind, format_version, latent_shape, num_steps, sigma_schedule,
/// context_dim, mean_scale, activation, decode_scale, lora (null or {rank, alpha,
/// base_sha256}). Blocks: policy.weight (d x k base), policy.bias, and lora.B /
/// lora.A when an adapter is attached.
nlohmann::json policy_manifest(const DenoisingPolicy& policy);
std::vector<TensorBlock> policy_blocks(const DenoisingPolicy& policy);
DenoisingPolicy policy_from_container(const Container& container);

/// `extra_manifest` fields are merged into the manifest; `extra_blocks` are appended.
void save_policy(const std::filesystem::path& path, const DenoisingPolicy& policy,
                 const nlohmann::json& extra_manifest = nlohmann::json::object(),
                 const std::vector<TensorBlock>& extra_blocks = {});
DenoisingPolicy load_policy(const std::filesystem::path& path);

}  // namespace safetune::policy
