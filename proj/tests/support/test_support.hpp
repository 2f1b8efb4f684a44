// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

// Fixtures shared by the unit and acceptance suites.

#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include <Eigen/Dense>

#include "safetune/policy/denoising_policy.hpp"

namespace safetune::testing {

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("safetune_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double rel_error(double got, double want) { return std::abs(got - want) / std::max(1e-12, std::abs(want)); }

inline double rel_error(const Eigen::VectorXd& got, const Eigen::VectorXd& want) {
  return (got - want).norm() / std::max(1e-12, want.norm());
}

/// Small policy with random float32-representable weights.
inline policy::DenoisingPolicy random_policy(const policy::PolicyConfig& config, std::uint64_t seed,
                                             double weight_scale = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, weight_scale);
  const int d = config.shape.size();
  const int k = d + 1 + config.context_dim;
  Eigen::MatrixXd w(d, k);
  Eigen::VectorXd b(d);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>(n(rng));
  for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<float>(n(rng));
  return policy::DenoisingPolicy(config, w, b);
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace safetune::testing
