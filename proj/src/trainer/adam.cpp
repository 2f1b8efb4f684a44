// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/trainer/adam.hpp"

#include <cmath>

#include "safetune/core/error.hpp"

namespace safetune::trainer {

namespace {

void round_to_float(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i]);
}

}  // namespace

AdamOptimizer::AdamOptimizer(Eigen::Index size, AdamConfig config)
    : config_(config), m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)) {
  if (!(config_.learning_rate >= 0.0)) throw InvalidArgument("learning rate must be >= 0");
  if (!(config_.beta1 >= 0.0 && config_.beta1 < 1.0) || !(config_.beta2 >= 0.0 && config_.beta2 < 1.0)) {
    throw InvalidArgument("adam betas must be in [0, 1)");
  }
  if (!(config_.epsilon > 0.0)) throw InvalidArgument("adam epsilon must be positive");
}

Eigen::VectorXd AdamOptimizer::step(const Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw InvalidArgument("adam state size mismatch");
  ++steps_;
  m_ = config_.beta1 * m_ + (1.0 - config_.beta1) * grad;
  v_ = config_.beta2 * v_ + (1.0 - config_.beta2) * grad.cwiseProduct(grad);
  round_to_float(m_);
  round_to_float(v_);
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  const Eigen::ArrayXd m_hat = m_.array() / c1;
  const Eigen::ArrayXd v_hat = v_.array() / c2;
  return (params.array() - config_.learning_rate * m_hat / (v_hat.sqrt() + config_.epsilon)).matrix();
}

void AdamOptimizer::restore(Eigen::VectorXd m, Eigen::VectorXd v, std::int64_t steps) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw InvalidArgument("adam state size mismatch");
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

}  // namespace safetune::trainer
