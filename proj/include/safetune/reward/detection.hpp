// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace safetune::reward {

/// One detector finding. The score is clamped into [0, 1] on construction.
struct DetectionResult {
  DetectionResult() = default;
  DetectionResult(std::string label, double confidence);

  std::string class_label;
  double score = 0.0;

  friend bool operator==(const DetectionResult&, const DetectionResult&) = default;
};

void to_json(nlohmann::json& j, const DetectionResult& d);
void from_json(const nlohmann::json& j, DetectionResult& d);

struct ClassInfo {
  std::string label;
  bool unsafe = false;
};

/// Per-class importance weights and the unsafe flag, keyed by detector label.
class ClassWeightTable {
 public:
  ClassWeightTable() = default;

  /// Every label gets weight 1.0 and the detector's own unsafe flag.
  static ClassWeightTable from_classes(const std::vector<ClassInfo>& classes);
  /// Parses {"label": {"weight": w, "unsafe": bool}, ...}. Either key may be
  /// omitted; when merged, an omitted key keeps the existing value.
  static ClassWeightTable from_json(const nlohmann::json& j);
  static ClassWeightTable load(const std::filesystem::path& path);

  void set(const std::string& label, double weight, bool unsafe);
  /// Applies an override document on top of this table.
  void merge(const ClassWeightTable& overrides);

  bool contains(const std::string& label) const { return entries_.contains(label); }
  double weight(const std::string& label) const;
  bool is_unsafe(const std::string& label) const;
  std::set<std::string> unsafe_classes() const;
  std::vector<std::string> labels() const;

  nlohmann::json to_json() const;
  /// Throws unless every weight is >= 0 and at least one class is unsafe.
  void validate() const;

 private:
  struct Entry {
    double weight = 1.0;
    bool unsafe = false;
    bool has_weight = true;
    bool has_unsafe = true;
  };
  std::map<std::string, Entry> entries_;
};

}  // namespace safetune::reward
