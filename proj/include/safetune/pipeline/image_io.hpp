// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "safetune/policy/types.hpp"

namespace safetune::pipeline {

/// Binary netpbm: P5 for one channel, P6 for three. Pixels are quantized to
/// 8 bits (round to nearest).
std::string encode_pnm(const policy::Image& image);
policy::Image decode_pnm(const std::string& bytes);

void write_pnm(const std::filesystem::path& path, const policy::Image& image);
policy::Image read_pnm(const std::filesystem::path& path);

}  // namespace safetune::pipeline
