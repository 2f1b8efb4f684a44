// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "safetune/policy/types.hpp"
#include "safetune/reward/detection.hpp"

namespace safetune::reward {

using policy::Image;

class Plugin {
 public:
  virtual ~Plugin() = default;
  virtual std::string name() const = 0;
  virtual std::string version() const { return "1"; }
  /// False when one instance must not be called from two threads at once.
  virtual bool shareable() const { return true; }
};

/// Image -> class detections. Must be deterministic in the image bytes.
class DetectorPlugin : public Plugin {
 public:
  virtual std::vector<DetectionResult> detect(const Image& image) const = 0;
  /// Labels this detector can emit, with its own notion of which are unsafe.
  virtual std::vector<ClassInfo> classes() const = 0;
};

/// (image, text) -> raw alignment score, nominal range [0, 100].
class AlignerPlugin : public Plugin {
 public:
  virtual double align(const Image& image, std::string_view text) const = 0;
};

struct FaceAnalysis {
  Eigen::VectorXd landmarks;
  double age = 0.0;
  Eigen::VectorXd embedding;
};

/// Returns nullopt when no face is found.
class FaceAnalyzerPlugin : public Plugin {
 public:
  virtual std::optional<FaceAnalysis> analyze(const Image& image) const = 0;
};

/// Evaluation-only image quality score.
class AestheticPlugin : public Plugin {
 public:
  virtual double score(const Image& image) const = 0;
};

/// Image -> feature vector for distribution distances.
class FeatureExtractorPlugin : public Plugin {
 public:
  virtual Eigen::VectorXd features(const Image& image) const = 0;
};

/// Hands out plugin instances to concurrent callers. A shareable plugin is
/// created once and handed to everyone; otherwise each concurrent lease gets its
/// own instance, created on demand and recycled on release.
template <typename P>
class PluginPool {
 public:
  using Factory = std::function<std::unique_ptr<P>()>;

  explicit PluginPool(Factory factory) : factory_(std::move(factory)) {
    auto first = factory_();
    shareable_ = first->shareable();
    name_ = first->name();
    if (shareable_) {
      shared_ = std::move(first);
    } else {
      free_.push_back(std::move(first));
    }
  }

  class Lease {
   public:
    Lease(const PluginPool* pool, std::unique_ptr<P> owned, const P* shared)
        : pool_(pool), owned_(std::move(owned)), shared_(shared) {}
    Lease(Lease&&) noexcept = default;
    Lease& operator=(Lease&&) = delete;
    ~Lease() {
      if (owned_) pool_->release(std::move(owned_));
    }
    const P& operator*() const { return owned_ ? *owned_ : *shared_; }
    const P* operator->() const { return owned_ ? owned_.get() : shared_; }

   private:
    const PluginPool* pool_;
    std::unique_ptr<P> owned_;
    const P* shared_;
  };

  Lease acquire() const {
    if (shareable_) return Lease(this, nullptr, shared_.get());
    std::unique_ptr<P> inst;
    {
      std::lock_guard lock(mu_);
      if (!free_.empty()) {
        inst = std::move(free_.back());
        free_.pop_back();
      }
    }
    if (!inst) inst = factory_();
    return Lease(this, std::move(inst), nullptr);
  }

  bool shareable() const { return shareable_; }
  const std::string& name() const { return name_; }

 private:
  void release(std::unique_ptr<P> inst) const {
    std::lock_guard lock(mu_);
    free_.push_back(std::move(inst));
  }

  Factory factory_;
  bool shareable_ = true;
  std::string name_;
  std::unique_ptr<P> shared_;
  mutable std::mutex mu_;
  mutable std::vector<std::unique_ptr<P>> free_;
};

}  // namespace safetune::reward
