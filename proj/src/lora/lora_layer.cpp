// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/lora/lora_layer.hpp"

#include <algorithm>
#include <random>
#include <span>

#include <fmt/format.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"
#include "safetune/core/hash.hpp"
#include "safetune/core/rng.hpp"

namespace safetune::lora {

namespace {

constexpr int kAdapterFormatVersion = 1;

std::vector<double> to_vector(const Eigen::MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

Eigen::MatrixXd from_block(const TensorBlock& b, Eigen::Index rows, Eigen::Index cols) {
  if (b.shape.size() != 2 || b.shape[0] != rows || b.shape[1] != cols) {
    throw FormatError(fmt::format("block '{}' has unexpected shape", b.name));
  }
  return Eigen::Map<const Eigen::MatrixXd>(b.values.data(), rows, cols);
}

}  // namespace

LoraLayer LoraLayer::init(Eigen::MatrixXd base, int rank, std::optional<double> alpha, std::uint64_t seed) {
  const auto limit = std::min(base.rows(), base.cols());
  if (rank < 1 || rank >= limit) {
    throw InvalidArgument(fmt::format("lora rank {} out of range [1, {})", rank, limit));
  }
  Engine engine = make_engine(seed, {0x10a4});
  std::normal_distribution<double> normal(0.0, 0.01);
  Eigen::MatrixXd down(rank, base.cols());
  for (Eigen::Index j = 0; j < down.cols(); ++j)
    for (Eigen::Index i = 0; i < down.rows(); ++i) down(i, j) = static_cast<float>(normal(engine));
  Eigen::MatrixXd up = Eigen::MatrixXd::Zero(base.rows(), rank);
  return LoraLayer(std::move(base), std::move(up), std::move(down), alpha.value_or(rank));
}

LoraLayer::LoraLayer(Eigen::MatrixXd base, Eigen::MatrixXd up, Eigen::MatrixXd down, double alpha)
    : base_(std::move(base)), up_(std::move(up)), down_(std::move(down)), alpha_(alpha) {
  const auto r = down_.rows();
  if (up_.rows() != base_.rows() || up_.cols() != r || down_.cols() != base_.cols()) {
    throw InvalidArgument("lora factor shapes do not match the base matrix");
  }
  if (r < 1 || r >= std::min(base_.rows(), base_.cols())) {
    throw InvalidArgument(fmt::format("lora rank {} out of range [1, {})", r, std::min(base_.rows(), base_.cols())));
  }
  if (!(alpha_ > 0.0)) throw InvalidArgument("lora alpha must be positive");
}

Eigen::VectorXd LoraLayer::forward(const Eigen::VectorXd& x) const {
  if (x.size() != base_.cols()) {
    throw InvalidArgument(fmt::format("lora input has dimension {}, expected {}", x.size(), base_.cols()));
  }
  Eigen::VectorXd out = base_ * x;
  out.noalias() += scaling() * (up_ * (down_ * x));
  return out;
}

Eigen::MatrixXd LoraLayer::merge() const { return base_ + scaling() * (up_ * down_); }

void LoraLayer::accumulate_gradient(const Eigen::VectorXd& upstream, const Eigen::VectorXd& x,
                                    Eigen::Ref<Eigen::MatrixXd> grad_up, Eigen::Ref<Eigen::MatrixXd> grad_down) const {
  const double s = scaling();
  grad_up.noalias() += s * upstream * (down_ * x).transpose();
  grad_down.noalias() += s * (up_.transpose() * upstream) * x.transpose();
}

std::string content_hash(const Eigen::MatrixXd& m) {
  return sha256_hex(pack_float32(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))));
}

void save_adapter(const std::filesystem::path& path, const std::vector<NamedLoraLayer>& layers) {
  nlohmann::json manifest;
  manifest["kind"] = "lora_adapter";
  manifest["format_version"] = kAdapterFormatVersion;
  auto entries = nlohmann::json::array();
  std::vector<TensorBlock> blocks;
  for (const auto& [name, layer] : layers) {
    entries.push_back({{"name", name},
                       {"d", layer.rows()},
                       {"k", layer.cols()},
                       {"r", layer.rank()},
                       {"alpha", layer.alpha()},
                       {"base_sha256", content_hash(layer.base())}});
    blocks.push_back({name + ".B", {layer.up().rows(), layer.up().cols()}, to_vector(layer.up())});
    blocks.push_back({name + ".A", {layer.down().rows(), layer.down().cols()}, to_vector(layer.down())});
  }
  manifest["layers"] = std::move(entries);
  write_container(path, std::move(manifest), blocks);
}

std::vector<NamedLoraLayer> load_adapter(const std::filesystem::path& path,
                                         const std::vector<std::pair<std::string, Eigen::MatrixXd>>& bases) {
  const Container c = read_container(path);
  if (c.manifest.value("kind", "") != "lora_adapter") throw FormatError("file is not a lora adapter");
  const int version = c.manifest.value("format_version", -1);
  if (version != kAdapterFormatVersion) {
    throw FormatError(fmt::format("lora adapter format version {} is not supported (expected {})", version,
                                  kAdapterFormatVersion));
  }
  std::vector<NamedLoraLayer> out;
  for (const auto& entry : c.manifest.at("layers")) {
    const auto name = entry.at("name").get<std::string>();
    auto it = std::find_if(bases.begin(), bases.end(), [&](const auto& b) { return b.first == name; });
    if (it == bases.end()) throw InvalidArgument(fmt::format("no base matrix supplied for lora layer '{}'", name));
    if (content_hash(it->second) != entry.at("base_sha256").get<std::string>()) {
      throw FormatError(fmt::format("base matrix for lora layer '{}' does not match the recorded content hash", name));
    }
    const auto d = entry.at("d").get<Eigen::Index>();
    const auto k = entry.at("k").get<Eigen::Index>();
    const auto r = entry.at("r").get<Eigen::Index>();
    out.push_back({name, LoraLayer(it->second, from_block(c.block(name + ".B"), d, r),
                                   from_block(c.block(name + ".A"), r, k), entry.at("alpha").get<double>())});
  }
  return out;
}

}  // namespace safetune::lora
