// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace safetune::trainer {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam, minimizing. Moments are kept on the float32 grid so
/// optimizer state round-trips through float32 checkpoints exactly.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, AdamConfig config);

  /// Returns params - lr * m_hat / (sqrt(v_hat) + eps).
  Eigen::VectorXd step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad);

  const AdamConfig& config() const { return config_; }
  const Eigen::VectorXd& first_moment() const { return m_; }
  const Eigen::VectorXd& second_moment() const { return v_; }
  std::int64_t steps() const { return steps_; }
  void restore(Eigen::VectorXd m, Eigen::VectorXd v, std::int64_t steps);

 private:
  AdamConfig config_;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  std::int64_t steps_ = 0;
};

}  // namespace safetune::trainer
