// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace safetune::lora {

/// A dense map W0 (d x k, frozen) adapted by a trainable low-rank update:
///   W = W0 + (alpha / r) * B * A,   B: d x r,  A: r x k,  1 <= r < min(d, k).
class LoraLayer {
 public:
  /// B starts at zero and A ~ N(0, 0.01^2), so the effective weight equals W0 exactly.
  /// `alpha` defaults to the rank (scaling 1).
  static LoraLayer init(Eigen::MatrixXd base, int rank, std::optional<double> alpha, std::uint64_t seed);

  LoraLayer(Eigen::MatrixXd base, Eigen::MatrixXd up, Eigen::MatrixXd down, double alpha);

  Eigen::Index rows() const { return base_.rows(); }
  Eigen::Index cols() const { return base_.cols(); }
  int rank() const { return static_cast<int>(down_.rows()); }
  double alpha() const { return alpha_; }
  double scaling() const { return alpha_ / rank(); }

  const Eigen::MatrixXd& base() const { return base_; }
  const Eigen::MatrixXd& up() const { return up_; }      // B
  const Eigen::MatrixXd& down() const { return down_; }  // A
  Eigen::MatrixXd& up() { return up_; }
  Eigen::MatrixXd& down() { return down_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd merge() const;

  /// r * (d + k).
  Eigen::Index trainable_size() const { return up_.size() + down_.size(); }

  /// Given dL/d(Wx) and x, adds dL/dB and dL/dA into the two gradient blocks.
  void accumulate_gradient(const Eigen::VectorXd& upstream, const Eigen::VectorXd& x,
                           Eigen::Ref<Eigen::MatrixXd> grad_up, Eigen::Ref<Eigen::MatrixXd> grad_down) const;

 private:
  Eigen::MatrixXd base_;
  Eigen::MatrixXd up_;
  Eigen::MatrixXd down_;
  double alpha_;
};

struct NamedLoraLayer {
  std::string name;
  LoraLayer layer;
};

/// Adapter-only export: JSON manifest (per-layer d, k, r, alpha, base content hash)
/// plus float32 blocks for B and A. Base weights are never written.
void save_adapter(const std::filesystem::path& path, const std::vector<NamedLoraLayer>& layers);

/// Reattaches saved factors to caller-supplied bases. Each base must hash to the
/// digest recorded at save time.
std::vector<NamedLoraLayer> load_adapter(const std::filesystem::path& path,
                                         const std::vector<std::pair<std::string, Eigen::MatrixXd>>& bases);

/// SHA-256 over the float32 bytes of a matrix (column-major).
std::string content_hash(const Eigen::MatrixXd& m);

}  // namespace safetune::lora
